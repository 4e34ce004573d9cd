//! Naive marked Hawkes baseline: constant background rate, no lasso, and a
//! mark driven by demographics plus within-region mobility.

use ndarray::{Array2, Array3};

use crate::domain::{Kernel, RegionPanel};
use crate::error::{Error, Result};
use crate::estimate::{fit_spec, BackgroundGrid, FitSpec, FittedMmhm};
use crate::process::CorrectionSeries;

/// Region-level covariates, one row per region.
#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub names: Vec<String>,
    pub values: Array2<f64>,
}

impl Demographics {
    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct NaiveBaseline {
    /// Input panel with the demographic columns appended.
    pub panel: RegionPanel,
    pub model: FittedMmhm,
}

/// Appends demographics (constant over days) to the panel covariates.
pub fn baseline_panel(panel: &RegionPanel, demographics: &Demographics) -> Result<RegionPanel> {
    if demographics.is_empty() {
        return Err(Error::Config(
            "the naive baseline needs at least one demographic covariate".into(),
        ));
    }
    let (n, k) = demographics.values.dim();
    if n != panel.n_regions() || k != demographics.names.len() {
        return Err(Error::Config(format!(
            "demographics table is {n}x{k}, expected {}x{}",
            panel.n_regions(),
            demographics.names.len()
        )));
    }
    let t = panel.n_days();
    let extra = Array3::from_shape_fn((n, t, k), |(i, _, j)| demographics.values[[i, j]]);
    panel.with_extra_covariates(&extra, &demographics.names)
}

/// Baseline variant: background rate profiled over `grid`, `ξ = 0`.
pub fn baseline_spec(grid: BackgroundGrid) -> FitSpec {
    FitSpec::background(grid, 0.0)
}

/// Fits the baseline on all regions. `panel` should carry only the
/// within-region mobility covariates; demographics are appended here.
pub fn naive_hawkes_baseline(
    panel: &RegionPanel,
    demographics: &Demographics,
    kernel: &Kernel,
    grid: BackgroundGrid,
) -> Result<NaiveBaseline> {
    let panel = baseline_panel(panel, demographics)?;
    // the background variant never reads the correction
    let correction = CorrectionSeries::zeros(panel.n_regions(), panel.n_days());
    let mut model = fit_spec(&panel, &correction, kernel, &baseline_spec(grid), None)?;
    model.metadata.insert("variant".into(), "naive_baseline".into());
    Ok(NaiveBaseline { panel, model })
}
