//! Probabilistic multi-day forecasts by Poisson rollout.
//!
//! Each replicate walks forward one day at a time: it evaluates the
//! intensity from observed history plus its own earlier draws, samples the
//! day's cases, and feeds them back as history (and, through the travel
//! correction, as imports into other regions). Every draw uses its own
//! counter-based RNG stream keyed by `(origin, replicate, region, day)`.

use ndarray::{s, Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::domain::{special, MobilityTensor, RegionPanel};
use crate::error::{Error, Result};
use crate::estimate::FittedMmhm;
use crate::process;
use crate::rng;

/// Rates below this use sequential-search inversion.
const INVERSION_LIMIT: f64 = 30.0;

/// Draws from `Poisson(rate)`.
pub fn poisson_sample<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Domain(format!("Poisson rate must be finite and >= 0, got {rate}")));
    }
    if rate == 0.0 {
        return Ok(0);
    }
    if rate < INVERSION_LIMIT {
        Ok(poisson_inversion(rate, rng))
    } else {
        Ok(poisson_ptrs(rate, rng))
    }
}

fn poisson_inversion<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-rate).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= rate / k as f64;
        cdf += p;
        if p == 0.0 && cdf < u {
            // u fell into the rounding gap of the CDF.
            break;
        }
    }
    k
}

/// Transformed rejection with squeeze (Hörmann's PTRS).
fn poisson_ptrs<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    let slam = rate.sqrt();
    let loglam = rate.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -rate + k * loglam - special::ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Where covariates and OD flows for days beyond the panel come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CovariatePolicy {
    /// Repeat the last observed day.
    #[default]
    HoldLast,
    /// User-supplied future inputs, `N x δ x p` covariates and optional
    /// `δ x N x N` OD flows (held at the last day when absent).
    Provided {
        covariates: Array3<f64>,
        od: Option<Array3<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub covariate_policy: CovariatePolicy,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 21,
            replicates: 10,
            seed: 0,
            covariate_policy: CovariatePolicy::HoldLast,
        }
    }
}

impl ForecastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Parameter("forecast horizon must be at least 1 day".into()));
        }
        if self.replicates < 1 {
            return Err(Error::Parameter("forecast needs at least one replicate".into()));
        }
        Ok(())
    }
}

/// Sampled trajectories, `replicates x N x δ`, and their per-day means.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Number of observed days before the first forecast day.
    pub origin: usize,
    pub draws: Array3<u64>,
    pub point: Array2<f64>,
}

impl ForecastResult {
    fn from_draws(origin: usize, draws: Array3<u64>) -> Self {
        let point = draws
            .mapv(|v| v as f64)
            .mean_axis(Axis(0))
            .expect("at least one replicate");
        Self { origin, draws, point }
    }

    pub fn horizon(&self) -> usize {
        self.draws.dim().2
    }

    pub fn replicates(&self) -> usize {
        self.draws.dim().0
    }

    /// Empirical quantile across replicates (linear interpolation between
    /// order statistics), `N x δ`.
    pub fn quantile(&self, q: f64) -> Array2<f64> {
        let (reps, n, h) = self.draws.dim();
        Array2::from_shape_fn((n, h), |(i, d)| {
            let mut v: Vec<f64> = (0..reps).map(|r| self.draws[[r, i, d]] as f64).collect();
            v.sort_by(f64::total_cmp);
            let pos = q.clamp(0.0, 1.0) * (reps - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        })
    }

    /// First `days` forecast days.
    pub fn truncate(&self, days: usize) -> Self {
        Self::from_draws(self.origin, self.draws.slice(s![.., .., ..days]).to_owned())
    }
}

/// Exogenous inputs for the rollout days.
trait FutureInputs: Sync {
    fn covariates(&self, region: usize, day: usize) -> ArrayView1<'_, f64>;
    fn od(&self, day: usize) -> ArrayView2<'_, f64>;
}

struct PanelInputs<'a> {
    panel: &'a RegionPanel,
    mobility: &'a MobilityTensor,
}

impl FutureInputs for PanelInputs<'_> {
    fn covariates(&self, region: usize, day: usize) -> ArrayView1<'_, f64> {
        self.panel.covariates_at(region, day)
    }
    fn od(&self, day: usize) -> ArrayView2<'_, f64> {
        self.mobility.od().index_axis(Axis(0), day)
    }
}

struct PolicyInputs<'a> {
    panel: &'a RegionPanel,
    mobility: &'a MobilityTensor,
    policy: &'a CovariatePolicy,
    origin: usize,
}

impl FutureInputs for PolicyInputs<'_> {
    fn covariates(&self, region: usize, day: usize) -> ArrayView1<'_, f64> {
        match self.policy {
            CovariatePolicy::HoldLast => self.panel.covariates_at(region, self.origin - 1),
            CovariatePolicy::Provided { covariates, .. } => {
                covariates.slice(s![region, day - self.origin, ..])
            }
        }
    }
    fn od(&self, day: usize) -> ArrayView2<'_, f64> {
        match self.policy {
            CovariatePolicy::Provided { od: Some(od), .. } => {
                od.index_axis(Axis(0), day - self.origin)
            }
            _ => self.mobility.od().index_axis(Axis(0), self.origin - 1),
        }
    }
}

/// Forecasts `config.horizon` days past the end of the panel for every
/// region.
pub fn forecast(
    model: &FittedMmhm,
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    config: &ForecastConfig,
) -> Result<ForecastResult> {
    config.validate()?;
    check_model(model, panel)?;
    mobility.check_against(panel)?;
    let (n, t_len) = (panel.n_regions(), panel.n_days());
    if let CovariatePolicy::Provided { covariates, od } = &config.covariate_policy {
        let (cn, ch, cp) = covariates.dim();
        if cn != n || cp != panel.n_covariates() {
            return Err(Error::data(format!(
                "future covariates are {cn}x{ch}x{cp}, expected {n}x{}x{}",
                config.horizon,
                panel.n_covariates()
            )));
        }
        if ch < config.horizon {
            return Err(Error::data(format!(
                "future covariates cover {ch} days, horizon is {}",
                config.horizon
            )));
        }
        if let Some(od) = od {
            let (oh, a, b) = od.dim();
            if a != n || b != n || oh < config.horizon {
                return Err(Error::data(format!(
                    "future OD flows are {oh}x{a}x{b}, need {}x{n}x{n}",
                    config.horizon
                )));
            }
        }
    }
    let correction = process::compute_correction(panel, mobility)?;
    let inputs = PolicyInputs {
        panel,
        mobility,
        policy: &config.covariate_policy,
        origin: t_len,
    };
    let draws = rollout(
        model,
        panel,
        &correction,
        &inputs,
        t_len,
        config.horizon,
        &vec![true; n],
        config.replicates,
        config.seed,
    )?;
    Ok(ForecastResult::from_draws(t_len, draws))
}

/// Forecasts days `origin..origin + horizon` inside the panel, using the
/// panel's own covariates and OD flows for those days.
///
/// Only regions flagged in `rollout_regions` are sampled; the others keep
/// their observed cases, which still feed the travel correction.
#[allow(clippy::too_many_arguments)]
pub fn forecast_window(
    model: &FittedMmhm,
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    origin: usize,
    horizon: usize,
    rollout_regions: &[bool],
    replicates: usize,
    seed: u64,
) -> Result<ForecastResult> {
    check_model(model, panel)?;
    mobility.check_against(panel)?;
    if origin < 1 || horizon < 1 || origin + horizon > panel.n_days() {
        return Err(Error::Parameter(format!(
            "window {origin}+{horizon} does not fit a {}-day panel",
            panel.n_days()
        )));
    }
    if replicates < 1 {
        return Err(Error::Parameter("forecast needs at least one replicate".into()));
    }
    if rollout_regions.len() != panel.n_regions() {
        return Err(Error::Parameter("rollout mask does not match panel".into()));
    }
    let correction = process::compute_correction(panel, mobility)?;
    let inputs = PanelInputs { panel, mobility };
    let draws = rollout(
        model,
        panel,
        &correction,
        &inputs,
        origin,
        horizon,
        rollout_regions,
        replicates,
        seed,
    )?;
    Ok(ForecastResult::from_draws(origin, draws))
}

fn check_model(model: &FittedMmhm, panel: &RegionPanel) -> Result<()> {
    if model.mark.covariate_names != panel.covariate_names() {
        return Err(Error::Parameter(format!(
            "model covariates {:?} do not match panel covariates {:?}",
            model.mark.covariate_names,
            panel.covariate_names()
        )));
    }
    model.import.validate()
}

#[allow(clippy::too_many_arguments)]
fn rollout(
    model: &FittedMmhm,
    panel: &RegionPanel,
    correction: &process::CorrectionSeries,
    inputs: &dyn FutureInputs,
    origin: usize,
    horizon: usize,
    rollout_regions: &[bool],
    replicates: usize,
    seed: u64,
) -> Result<Array3<u64>> {
    let n = panel.n_regions();
    let alpha = model.import.alpha();
    let background = model.import.background();
    let kernel = &model.kernel;
    let history = process::source_weights(panel, correction, model.import);

    let per_replicate: Vec<Result<Array2<u64>>> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut weights: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let mut w = Vec::with_capacity(origin + horizon);
                    w.extend(history.slice(s![i, ..origin]).iter());
                    w
                })
                .collect();
            let mut out = Array2::zeros((n, horizon));
            let mut today = vec![0.0; n];
            let mut imports = vec![0.0; n];
            for d in 0..horizon {
                let day = origin + d;
                for i in 0..n {
                    today[i] = if rollout_regions[i] {
                        let rate = model.mark.rate(inputs.covariates(i, day));
                        let lambda = background + rate * process::excitation(&weights[i], day, kernel);
                        let mut stream = rng::stream(
                            seed,
                            &[rng::tag::FORECAST, origin as u64, rep as u64, i as u64, day as u64],
                        );
                        poisson_sample(lambda, &mut stream)? as f64
                    } else {
                        panel.case(i, day) as f64
                    };
                    out[[i, d]] = today[i] as u64;
                }
                if alpha != 0.0 {
                    process::correction_on_day(inputs.od(day), &today, panel.population(), &mut imports);
                }
                for i in 0..n {
                    weights[i].push(today[i] + alpha * imports[i]);
                }
            }
            Ok(out)
        })
        .collect();

    let mut draws = Array3::zeros((replicates, n, horizon));
    for (rep, result) in per_replicate.into_iter().enumerate() {
        draws.index_axis_mut(Axis(0), rep).assign(&result?);
    }
    Ok(draws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_zero() {
        let mut r = rng::stream(1, &[0]);
        for _ in 0..100 {
            assert_eq!(poisson_sample(0.0, &mut r).unwrap(), 0);
        }
    }

    #[test]
    fn invalid_rates() {
        let mut r = rng::stream(1, &[0]);
        assert!(poisson_sample(-1.0, &mut r).is_err());
        assert!(poisson_sample(f64::NAN, &mut r).is_err());
        assert!(poisson_sample(f64::INFINITY, &mut r).is_err());
    }

    #[test]
    fn huge_rate_within_five_sigma() {
        let mut r = rng::stream(9, &[1]);
        let k = poisson_sample(1e6, &mut r).unwrap() as f64;
        assert!((k - 1e6).abs() <= 5e3, "{k}");
    }

    fn moments(rate: f64, draws: usize, seed: u64) -> (f64, f64) {
        let mut r = rng::stream(seed, &[rate.to_bits()]);
        let xs: Vec<f64> = (0..draws)
            .map(|_| poisson_sample(rate, &mut r).unwrap() as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws as f64 - 1.0);
        (mean, var)
    }

    #[test]
    fn variance_at_rate_four() {
        let (mean, var) = moments(4.0, 100_000, 3);
        assert!((mean - 4.0).abs() < 3.0 * (4.0f64 / 1e5).sqrt());
        assert!((var - 4.0).abs() < 0.15, "{var}");
    }

    #[test]
    fn both_samplers_agree_near_switch() {
        for rate in [29.5, 30.0, 45.0] {
            let (mean, var) = moments(rate, 50_000, 11);
            let se = (rate / 5e4).sqrt();
            assert!((mean - rate).abs() < 4.0 * se, "rate {rate}: mean {mean}");
            assert!((var / rate - 1.0).abs() < 0.05, "rate {rate}: var {var}");
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let draws = Array3::from_shape_vec((5, 1, 1), vec![0, 10, 20, 30, 40]).unwrap();
        let f = ForecastResult::from_draws(3, draws);
        assert_eq!(f.point[[0, 0]], 20.0);
        assert_eq!(f.quantile(0.1)[[0, 0]], 4.0);
        assert_eq!(f.quantile(0.9)[[0, 0]], 36.0);
    }
}
