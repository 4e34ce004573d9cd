//! Grid search over the travel weight on a scenario with strong OD flows.

use mmhm::estimate::{tune, CvConfig, FitSpec, Grid};
use mmhm::simulate::{simulate_panel, ScenarioSpec, Trajectory};
use mmhm::Kernel;

fn main() -> mmhm::Result<()> {
    let mut spec = ScenarioSpec::desk_scale(12);
    // strong, steady travel so the correction carries signal
    for row in spec.od.baseline.iter_mut() {
        row.iter_mut().for_each(|v| *v *= 10.0);
    }
    spec.od.multiplier = Trajectory::constant(1.0);
    let sim = simulate_panel(&spec)?;
    let b = &sim.bundle;

    let grid = Grid {
        alphas: vec![0.0, 0.5, 1.0, 1.5, 2.0],
        xis: vec![0.0, 4.0],
    };
    let cv = CvConfig {
        horizon: 14,
        replicates: 5,
        ..CvConfig::default()
    };
    let result = tune(&b.panel, &b.mobility, &Kernel::incubation(), &grid, &FitSpec::travel(1.0, 0.0), &cv)?;
    println!("{:>6} {:>5} {:>10}", "alpha", "xi", "cv_rmse");
    for c in &result.grid {
        println!("{:>6} {:>5} {:>10.3}", c.alpha, c.xi, c.cv_rmse);
    }
    println!("best alpha {} xi {} (true alpha {})", result.best_alpha, result.best_xi, sim.truth.alpha);
    Ok(())
}
