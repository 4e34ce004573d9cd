//! Full model against the no-correction variant and the naive baseline,
//! with a Wilcoxon test on per-cell RMSE.

use mmhm::estimate::{loro_cv, BackgroundGrid, CvConfig, FitSpec};
use mmhm::eval::{baseline_panel, baseline_spec, wilcoxon_signed_rank, ScoreReport};
use mmhm::simulate::{simulate_panel, ScenarioSpec};
use mmhm::Kernel;

fn rmse_cells(r: &ScoreReport) -> Vec<f64> {
    r.per_region.iter().map(|c| c.rmse).collect()
}

// travel flows in the desk-scale scenario are light, so the correction need not win here
fn main() -> mmhm::Result<()> {
    let sim = simulate_panel(&ScenarioSpec::desk_scale(21))?;
    let b = &sim.bundle;
    let kernel = Kernel::incubation();
    let cv = CvConfig {
        horizon: 14,
        replicates: 5,
        ..CvConfig::default()
    };

    let full = loro_cv(&b.panel, &b.mobility, &kernel, &FitSpec::travel(1.0, 0.0), &cv)?.report;
    let no_corr = loro_cv(&b.panel, &b.mobility, &kernel, &FitSpec::background(BackgroundGrid::default(), 0.0), &cv)?.report;
    let naive_panel = baseline_panel(&b.panel, &b.demographics())?;
    let naive = loro_cv(&naive_panel, &b.mobility, &kernel, &baseline_spec(BackgroundGrid::default()), &cv)?.report;

    println!("macro RMSE: full {:.3}, no correction {:.3}, naive {:.3}", full.macro_rmse, no_corr.macro_rmse, naive.macro_rmse);
    for (label, other) in [("no correction", &no_corr), ("naive", &naive)] {
        let w = wilcoxon_signed_rank(&rmse_cells(&full), &rmse_cells(other))?;
        println!("full vs {label}: W = {}, n = {}, p = {:.4}", w.statistic, w.n, w.p_value);
    }
    Ok(())
}
