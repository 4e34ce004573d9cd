//! Writes a simulated bundle and a fitted model to disk and reads both back.

use mmhm::data::{load_bundle, load_model, save_bundle, save_model, BundlePaths, LoadOptions};
use mmhm::estimate::fit_em;
use mmhm::simulate::{simulate_panel, ScenarioSpec};
use mmhm::{EmConfig, Kernel};

fn main() -> mmhm::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("mmhm_roundtrip"));
    let sim = simulate_panel(&ScenarioSpec::desk_scale(2))?;
    save_bundle(&sim.bundle, &dir)?;
    for entry in std::fs::read_dir(&dir).map_err(|e| mmhm::Error::io(&dir, e))?.flatten() {
        let size = entry.metadata().map(|m| m.len()).unwrap_or(0);
        println!("{:<24} {size:>9} bytes", entry.file_name().to_string_lossy());
    }

    let back = load_bundle(&BundlePaths::from_dir(&dir), &LoadOptions::default())?;
    assert_eq!(back.panel.cases(), sim.bundle.panel.cases());
    println!("reloaded {} regions, covariates {:?}", back.n_regions(), back.panel.covariate_names());

    let model = fit_em(&back.panel, &back.mobility, &Kernel::incubation(), &EmConfig::travel(1.0, 0.0))?;
    let path = dir.join("model.json");
    save_model(&model, &path)?;
    assert_eq!(load_model(&path)?, model);
    println!("model.json round-trips exactly");
    Ok(())
}
