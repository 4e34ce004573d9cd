//! Fits on the first 70 days and forecasts the next three weeks.

use mmhm::estimate::fit_em;
use mmhm::forecast::{forecast, ForecastConfig};
use mmhm::simulate::{simulate_panel, ScenarioSpec};
use mmhm::{EmConfig, Kernel};

fn main() -> mmhm::Result<()> {
    let sim = simulate_panel(&ScenarioSpec::desk_scale(4))?;
    let b = &sim.bundle;
    let observed = 69;
    let train = b.panel.truncate_days(observed)?;
    let model = fit_em(&train, &b.mobility, &Kernel::incubation(), &EmConfig::travel(1.0, 0.0))?;

    let config = ForecastConfig {
        horizon: 21,
        replicates: 200,
        seed: 7,
        ..ForecastConfig::default()
    };
    let result = forecast(&model, &train, &b.mobility, &config)?;
    let (q10, q90) = (result.quantile(0.1), result.quantile(0.9));

    let region = b.panel.region_by_code("ZH").expect("ZH is simulated").0;
    println!("ZH, forecast from {}", b.date_of(observed));
    println!("{:<11} {:>6} {:>8} {:>6} {:>6}", "date", "obs", "mean", "q10", "q90");
    for d in 0..config.horizon {
        println!(
            "{:<11} {:>6} {:>8.1} {:>6.1} {:>6.1}",
            b.date_of(observed + d).to_string(),
            b.panel.case(region, observed + d),
            result.point[[region, d]],
            q10[[region, d]],
            q90[[region, d]]
        );
    }
    Ok(())
}
