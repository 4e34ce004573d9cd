//! Model estimation: EM fitting, the background-rate profile, leave-one-region-out
//! cross-validation, and the `(α, ξ)` grid search.

mod cv;
mod em;
mod tune;

pub use cv::{forecast_origins, loro_cv, CvConfig, CvResult, Fold};
pub use em::{
    attribution_sums, e_step, fit_day_limit, fit_em, fit_em_from, fit_em_masked, mark_values, EmConfig, FittedMmhm,
};
pub use tune::{tune, Grid, GridCell, TuneResult};

pub use crate::process::ImportTerm;

use crate::domain::{Kernel, RegionPanel};
use crate::error::{Error, Result};
use crate::mark::LassoSettings;
use crate::process::{self, CorrectionSeries};

/// Candidate background rates for the profile search.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundGrid {
    /// Upper end of the grid; defaults to the mean daily cases per region.
    pub max: Option<f64>,
    pub points: usize,
}

impl Default for BackgroundGrid {
    fn default() -> Self {
        Self { max: None, points: 11 }
    }
}

impl BackgroundGrid {
    pub fn values(&self, panel: &RegionPanel, regions: &[bool]) -> Result<Vec<f64>> {
        if self.points < 1 {
            return Err(Error::Parameter("background grid needs at least one point".into()));
        }
        let hi = match self.max {
            Some(v) if v >= 0.0 && v.is_finite() => v,
            Some(v) => return Err(Error::Parameter(format!("background grid max must be >= 0, got {v}"))),
            None => {
                let (mut sum, mut count) = (0u64, 0usize);
                for (i, _) in regions.iter().enumerate().filter(|(_, m)| **m) {
                    sum += panel.cases().row(i).sum();
                    count += panel.n_days();
                }
                sum as f64 / count.max(1) as f64
            }
        };
        if self.points == 1 {
            return Ok(vec![hi]);
        }
        Ok((0..self.points)
            .map(|k| hi * k as f64 / (self.points - 1) as f64)
            .collect())
    }
}

/// Import handling of a model variant.
#[derive(Debug, Clone, PartialEq)]
pub enum ImportSpec {
    Travel { alpha: f64 },
    /// Background rate chosen by profile likelihood over the grid.
    Background(BackgroundGrid),
}

/// A model variant: import handling, penalty, and EM settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSpec {
    pub import: ImportSpec,
    pub xi: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub lambda_floor: f64,
    pub tail_correction: bool,
    pub lasso: LassoSettings,
}

impl FitSpec {
    /// The full model with travel correction.
    pub fn travel(alpha: f64, xi: f64) -> Self {
        let base = EmConfig::default();
        Self {
            import: ImportSpec::Travel { alpha },
            xi,
            tol: base.tol,
            max_iter: base.max_iter,
            lambda_floor: base.lambda_floor,
            tail_correction: base.tail_correction,
            lasso: base.lasso,
        }
    }

    /// Constant background rate instead of the travel correction.
    pub fn background(grid: BackgroundGrid, xi: f64) -> Self {
        Self {
            import: ImportSpec::Background(grid),
            ..Self::travel(0.0, xi)
        }
    }

    pub fn em_config(&self, import: ImportTerm) -> EmConfig {
        EmConfig {
            import,
            xi: self.xi,
            tol: self.tol,
            max_iter: self.max_iter,
            lambda_floor: self.lambda_floor,
            tail_correction: self.tail_correction,
            lasso: self.lasso,
        }
    }

    /// Same variant with a different travel weight and penalty.
    pub fn with_alpha_xi(&self, alpha: f64, xi: f64) -> Self {
        let import = match &self.import {
            ImportSpec::Travel { .. } => ImportSpec::Travel { alpha },
            other => other.clone(),
        };
        Self {
            import,
            xi,
            ..self.clone()
        }
    }
}

/// Poisson log-likelihood of the observed cases (up to the `ln y!` constant)
/// over the flagged regions.
pub fn case_log_likelihood(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    model: &FittedMmhm,
    regions: &[bool],
    lambda_floor: f64,
) -> f64 {
    let weights = process::source_weights(panel, correction, model.import);
    let bg = model.import.background();
    let mut ll = 0.0;
    for (i, _) in regions.iter().enumerate().filter(|(_, m)| **m) {
        let w = weights.row(i);
        let w = w.as_slice().expect("weights are contiguous");
        for t in 0..panel.n_days() {
            let rate = model.mark.rate(panel.covariates_at(i, t));
            let lambda = bg + rate * process::excitation(w, t, &model.kernel);
            let y = panel.case(i, t) as f64;
            if y > 0.0 {
                ll += y * lambda.max(lambda_floor).ln();
            }
            ll -= lambda;
        }
    }
    ll
}

/// Grid points past the best one, all worse, after which the profile stops.
const PROFILE_PATIENCE: usize = 2;

/// Fits a model variant. Background variants profile the rate upwards over
/// their grid and keep the fit with the highest case log-likelihood (ties go
/// to the smaller rate), stopping once [`PROFILE_PATIENCE`] consecutive
/// points fail to improve on it.
pub fn fit_spec(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    kernel: &Kernel,
    spec: &FitSpec,
    regions: Option<&[bool]>,
) -> Result<FittedMmhm> {
    match &spec.import {
        ImportSpec::Travel { alpha } => {
            let cfg = spec.em_config(ImportTerm::Travel { alpha: *alpha });
            fit_em_masked(panel, correction, kernel, &cfg, regions)
        }
        ImportSpec::Background(grid) => {
            let all = vec![true; panel.n_regions()];
            let mask = regions.unwrap_or(&all);
            let mut best: Option<(f64, FittedMmhm)> = None;
            let mut start: Option<crate::mark::MarkModel> = None;
            let mut worse = 0;
            for rate in grid.values(panel, mask)? {
                if worse >= PROFILE_PATIENCE {
                    break;
                }
                let cfg = spec.em_config(ImportTerm::Background { rate });
                // warm start from the neighbouring grid point
                let fit = fit_em_from(panel, correction, kernel, &cfg, Some(mask), start.as_ref())?;
                start = Some(fit.mark.clone());
                let ll = case_log_likelihood(panel, correction, &fit, mask, spec.lambda_floor);
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    best = Some((ll, fit));
                    worse = 0;
                } else {
                    worse += 1;
                }
            }
            let (_, fit) = best.expect("grid has at least one point");
            Ok(fit)
        }
    }
}
