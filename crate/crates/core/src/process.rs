//! Conditional intensity of the mobility-marked Hawkes process.
//!
//! For region `i` on day `t`,
//!
//! ```text
//!   λ_i(t) = λ₀ + R(x_it) · Σ_{l=1..L} w_i(t−l) · φ(l)
//! ```
//!
//! where `w_i(s)` is the source weight of day `s`. Under the travel
//! correction, `w_i(s) = y_is + α n̂_i(s)` and `λ₀ = 0`. Under the
//! background variant, `w_i(s) = y_is` and `λ₀` is a constant rate.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::domain::{DayIndex, Kernel, MobilityTensor, RegionId, RegionPanel};
use crate::error::{Error, Result};
use crate::mark::MarkModel;

/// How cases from outside a region's own history enter its intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImportTerm {
    /// Infected travellers `α n̂_i(t)` join the source weights.
    Travel { alpha: f64 },
    /// Constant background rate, travellers ignored.
    Background { rate: f64 },
}

impl ImportTerm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ImportTerm::Travel { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")))
            }
            ImportTerm::Background { rate } if !(rate >= 0.0 && rate.is_finite()) => Err(
                Error::Parameter(format!("background rate must be >= 0, got {rate}")),
            ),
            _ => Ok(()),
        }
    }

    /// Travel weight α, or 0 for the background variant.
    pub fn alpha(&self) -> f64 {
        match *self {
            ImportTerm::Travel { alpha } => alpha,
            ImportTerm::Background { .. } => 0.0,
        }
    }

    pub fn background(&self) -> f64 {
        match *self {
            ImportTerm::Travel { .. } => 0.0,
            ImportTerm::Background { rate } => rate,
        }
    }
}

/// Estimated infected travellers into each region, `N x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectionSeries {
    pub n_hat: Array2<f64>,
}

impl CorrectionSeries {
    pub fn zeros(n_regions: usize, n_days: usize) -> Self {
        Self {
            n_hat: Array2::zeros((n_regions, n_days)),
        }
    }
}

/// Infected travellers arriving in each region on one day:
/// `n̂_i = Σ_{i'≠i} od[i'][i] · y_i' / q_i'`.
pub fn correction_on_day(od: ArrayView2<'_, f64>, cases: &[f64], population: &[u64], out: &mut [f64]) {
    let n = cases.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for from in 0..n {
        if cases[from] == 0.0 {
            continue;
        }
        let prevalence = cases[from] / population[from] as f64;
        for (to, slot) in out.iter_mut().enumerate() {
            if to != from {
                *slot += od[[from, to]] * prevalence;
            }
        }
    }
}

/// Travel correction for every region-day of the panel.
pub fn compute_correction(panel: &RegionPanel, mobility: &MobilityTensor) -> Result<CorrectionSeries> {
    mobility.check_against(panel)?;
    let (n, t) = (panel.n_regions(), panel.n_days());
    let mut n_hat = Array2::zeros((n, t));
    let mut cases = vec![0.0; n];
    let mut out = vec![0.0; n];
    for day in 0..t {
        for (i, c) in cases.iter_mut().enumerate() {
            *c = panel.case(i, day) as f64;
        }
        let od = mobility.od().index_axis(ndarray::Axis(0), day);
        correction_on_day(od, &cases, panel.population(), &mut out);
        n_hat.column_mut(day).assign(&ndarray::ArrayView1::from(&out));
    }
    Ok(CorrectionSeries { n_hat })
}

/// Source weights `w_i(t)` of every region-day.
pub fn source_weights(panel: &RegionPanel, correction: &CorrectionSeries, import: ImportTerm) -> Array2<f64> {
    let alpha = import.alpha();
    let mut w = panel.cases().mapv(|y| y as f64);
    if alpha != 0.0 {
        w.scaled_add(alpha, &correction.n_hat);
    }
    w
}

/// `Σ_{l=1..min(L, day)} weights[day − l] · φ(l)` for a zero-based `day`.
#[inline]
pub fn excitation(weights: &[f64], day: usize, kernel: &Kernel) -> f64 {
    let max_lag = kernel.len().min(day);
    let probs = kernel.probs();
    let mut acc = 0.0;
    for lag in 1..=max_lag {
        acc += weights[day - lag] * probs[lag - 1];
    }
    acc
}

/// Everything the intensity needs besides data.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityParams {
    pub import: ImportTerm,
    pub kernel: Kernel,
    pub mark: MarkModel,
}

/// `λ_i(t)` for one region-day, with the mark evaluated at the receiving day.
pub fn intensity(
    params: &IntensityParams,
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    region: RegionId,
    day: DayIndex,
) -> Result<f64> {
    let (n, t) = (panel.n_regions(), panel.n_days());
    if region.0 >= n {
        return Err(Error::Parameter(format!("region {} out of range 0..{n}", region.0)));
    }
    if day.0 < 1 || day.0 > t {
        return Err(Error::Parameter(format!("day {} out of range 1..={t}", day.0)));
    }
    if params.mark.n_covariates() != panel.n_covariates() {
        return Err(Error::Parameter(format!(
            "mark expects {} covariates, panel has {}",
            params.mark.n_covariates(),
            panel.n_covariates()
        )));
    }
    params.import.validate()?;
    let d = day.offset();
    let alpha = params.import.alpha();
    let from = d.saturating_sub(params.kernel.len());
    let weights: Vec<f64> = (from..d)
        .map(|s| panel.case(region.0, s) as f64 + alpha * correction.n_hat[[region.0, s]])
        .collect();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w * params.kernel.at(d - (from + k));
    }
    let rate = params.mark.rate(panel.covariates_at(region.0, d));
    Ok(params.import.background() + rate * acc)
}
