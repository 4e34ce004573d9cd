use rayon::prelude::*;

use super::{fit_spec, FitSpec, FittedMmhm};
use crate::domain::{Kernel, MobilityTensor, RegionId, RegionPanel};
use crate::error::{Error, Result};
use crate::eval::{score, ScoreCell, ScoreReport};
use crate::forecast::{forecast_window, ForecastResult};
use crate::process;

/// Leave-one-region-out settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    /// Longest horizon δ; every horizon `1..=δ` is scored.
    pub horizon: usize,
    /// Observed days at the first forecast origin; defaults to
    /// `max(L, T / 2)`.
    pub first_origin: Option<usize>,
    /// Days between consecutive origins.
    pub stride: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            horizon: 21,
            first_origin: None,
            stride: 7,
            replicates: 10,
            seed: 0,
        }
    }
}

/// Forecast origins (observed-day counts) used by the CV.
pub fn forecast_origins(n_days: usize, kernel_len: usize, cv: &CvConfig) -> Result<Vec<usize>> {
    if cv.horizon < 1 || cv.stride < 1 || cv.replicates < 1 {
        return Err(Error::Parameter(
            "CV horizon, stride and replicates must be at least 1".into(),
        ));
    }
    let first = cv.first_origin.unwrap_or(kernel_len.max(n_days / 2)).max(1);
    if first + cv.horizon > n_days {
        return Err(Error::Parameter(format!(
            "a {}-day horizon from day {first} does not fit a {n_days}-day panel",
            cv.horizon
        )));
    }
    Ok((first..=n_days - cv.horizon).step_by(cv.stride).collect())
}

/// One held-out region.
#[derive(Debug, Clone)]
pub struct Fold {
    pub region: RegionId,
    pub model: FittedMmhm,
    pub forecasts: Vec<ForecastResult>,
    pub cells: Vec<ScoreCell>,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub folds: Vec<Fold>,
    pub report: ScoreReport,
}

/// Leave-one-region-out cross-validation.
///
/// For each region `i`, the model is fitted on every other region and then
/// region `i` alone is rolled out from each origin, with the other regions'
/// observed cases feeding its travel correction. Errors of horizon `h` are
/// pooled over origins into one RMSE/MAE cell per `(i, h)`.
pub fn loro_cv(
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    kernel: &Kernel,
    spec: &FitSpec,
    cv: &CvConfig,
) -> Result<CvResult> {
    let n = panel.n_regions();
    if n < 2 {
        return Err(Error::Parameter("cross-validation needs at least two regions".into()));
    }
    let origins = forecast_origins(panel.n_days(), kernel.len(), cv)?;
    let correction = process::compute_correction(panel, mobility)?;

    let folds: Vec<Result<Fold>> = (0..n)
        .into_par_iter()
        .map(|held_out| {
            let train: Vec<bool> = (0..n).map(|i| i != held_out).collect();
            let model = fit_spec(panel, &correction, kernel, spec, Some(&train))?;
            run_fold(&model, panel, mobility, RegionId(held_out), &origins, cv)
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let cells = folds.iter().flat_map(|f| f.cells.iter().cloned()).collect();
    Ok(CvResult {
        folds,
        report: ScoreReport::from_cells(cells)?,
    })
}

fn run_fold(
    model: &FittedMmhm,
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    region: RegionId,
    origins: &[usize],
    cv: &CvConfig,
) -> Result<Fold> {
    let mask: Vec<bool> = (0..panel.n_regions()).map(|i| i == region.0).collect();
    let mut forecasts = Vec::with_capacity(origins.len());
    for &origin in origins {
        forecasts.push(forecast_window(
            model,
            panel,
            mobility,
            origin,
            cv.horizon,
            &mask,
            cv.replicates,
            cv.seed,
        )?);
    }
    let mut cells = Vec::with_capacity(cv.horizon);
    for h in 0..cv.horizon {
        let actual: Vec<f64> = origins
            .iter()
            .map(|&o| panel.case(region.0, o + h) as f64)
            .collect();
        let predicted: Vec<f64> = forecasts.iter().map(|f| f.point[[region.0, h]]).collect();
        let (rmse, mae) = score(&actual, &predicted)?;
        cells.push(ScoreCell {
            region: panel.codes()[region.0].clone(),
            horizon: h + 1,
            rmse,
            mae,
        });
    }
    Ok(Fold {
        region,
        model: model.clone(),
        forecasts,
        cells,
    })
}
