//! Simulates a 26-canton panel and compares fitted mark coefficients to the
//! ones that generated it.

use mmhm::estimate::fit_em;
use mmhm::simulate::{simulate_panel, ScenarioSpec};
use mmhm::{EmConfig, Kernel};

fn main() -> mmhm::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let sim = simulate_panel(&ScenarioSpec::desk_scale(seed))?;
    let b = &sim.bundle;
    println!(
        "{} regions x {} days, {} cases (peak intensity {:.1})",
        b.n_regions(),
        b.n_days(),
        sim.truth.total_cases,
        sim.truth.max_intensity
    );

    let fit = fit_em(&b.panel, &b.mobility, &Kernel::incubation(), &EmConfig::travel(sim.truth.alpha, 0.0))?;
    let (beta0, theta) = fit.mark.raw_coefficients();
    println!("EM: {} iterations, converged {}", fit.iterations, fit.converged);
    println!("{:<32} {:>9} {:>9}", "coefficient", "true", "fitted");
    println!("{:<32} {:>9.3} {:>9.3}", "intercept", sim.truth.beta0, beta0);
    for ((name, t), f) in sim.truth.covariate_names.iter().zip(&sim.truth.theta).zip(&theta) {
        println!("{name:<32} {t:>9.3} {f:>9.3}");
    }

    // ratio covariates sit near 1 and trade off against the intercept, so compare R too
    let truth = sim.truth.mark()?;
    let mut rel: Vec<f64> = (0..b.n_regions())
        .flat_map(|i| (0..b.n_days()).map(move |t| (i, t)))
        .map(|(i, t)| {
            let x = b.panel.covariates_at(i, t);
            (fit.mark.rate(x) / truth.rate(x) - 1.0).abs()
        })
        .collect();
    rel.sort_by(f64::total_cmp);
    println!("median relative error of R over region-days: {:.3}", rel[rel.len() / 2]);
    Ok(())
}
