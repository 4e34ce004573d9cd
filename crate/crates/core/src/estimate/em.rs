use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Kernel, MobilityTensor, RegionPanel};
use crate::error::{Error, Result};
use crate::mark::{self, LassoSettings, MarkFitProblem, MarkModel};
use crate::process::{self, CorrectionSeries, ImportTerm};

/// Settings of one EM run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub import: ImportTerm,
    /// Lasso penalty on the mean-likelihood scale.
    pub xi: f64,
    /// Stop once the L1 change of `[β₀, θ]` falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound on `λ` when dividing by it in the E-step.
    pub lambda_floor: f64,
    /// Divide late responses by the observed kernel mass and keep them in
    /// the M-step, instead of dropping the last `ceil(L/2)` days.
    pub tail_correction: bool,
    pub lasso: LassoSettings,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            import: ImportTerm::Travel { alpha: 0.0 },
            xi: 0.0,
            tol: 1e-5,
            max_iter: 200,
            lambda_floor: 1e-10,
            tail_correction: false,
            // warm-started, so a short budget per M-step suffices
            lasso: LassoSettings {
                max_iter: 50,
                ..LassoSettings::default()
            },
        }
    }
}

impl EmConfig {
    pub fn travel(alpha: f64, xi: f64) -> Self {
        Self {
            import: ImportTerm::Travel { alpha },
            xi,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.import.validate()?;
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Parameter(format!("xi must be >= 0, got {}", self.xi)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::Parameter("max_iter must be at least 1".into()));
        }
        if !(self.lambda_floor > 0.0) {
            return Err(Error::Parameter("lambda_floor must be > 0".into()));
        }
        Ok(())
    }
}

/// A fitted model, ready for forecasting and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedMmhm {
    pub mark: MarkModel,
    pub kernel: Kernel,
    pub import: ImportTerm,
    pub xi: f64,
    /// Inferred offspring per source case, `N x T`.
    pub r_hat: Array2<f64>,
    /// Region-days that entered the final M-step.
    pub fit_rows: usize,
    pub iterations: usize,
    pub converged: bool,
    /// L1 parameter change of the last iteration.
    pub final_change: f64,
    /// Largest deviation of the E-step attribution sums from 1.
    pub attribution_residual: f64,
    /// Free-form run metadata (variant flags, covariate selection).
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl FittedMmhm {
    pub fn alpha(&self) -> f64 {
        self.import.alpha()
    }

    pub fn intensity_params(&self) -> process::IntensityParams {
        process::IntensityParams {
            import: self.import,
            kernel: self.kernel.clone(),
            mark: self.mark.clone(),
        }
    }
}

/// Mark values `R(x_it)` for every region-day.
pub fn mark_values(panel: &RegionPanel, mark: &MarkModel) -> Array2<f64> {
    Array2::from_shape_fn((panel.n_regions(), panel.n_days()), |(i, t)| {
        mark.rate(panel.covariates_at(i, t))
    })
}

/// Expectation step.
///
/// For each region and each pair of days `t < t'`, the per-source-case
/// attribution is `p(t, t') = R(x_it') φ(t' − t) / λ(t')`, and
/// `r_it = Σ_{t' > t} p(t, t') y_it'`. Days with `y_it' = 0` contribute
/// nothing; `λ` is floored at `lambda_floor`.
pub fn e_step(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    mark: &MarkModel,
    kernel: &Kernel,
    import: ImportTerm,
    lambda_floor: f64,
) -> Array2<f64> {
    let weights = process::source_weights(panel, correction, import);
    let rates = mark_values(panel, mark);
    e_step_with(panel, &weights, &rates, kernel, import.background(), lambda_floor)
}

fn e_step_with(
    panel: &RegionPanel,
    weights: &Array2<f64>,
    rates: &Array2<f64>,
    kernel: &Kernel,
    background: f64,
    lambda_floor: f64,
) -> Array2<f64> {
    let (n, t_len) = (panel.n_regions(), panel.n_days());
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r_row = vec![0.0; t_len];
            let w = weights.row(i);
            let w = w.as_slice().expect("weights are contiguous");
            for tp in 1..t_len {
                let y = panel.case(i, tp);
                if y == 0 {
                    continue;
                }
                let rate = rates[[i, tp]];
                let lambda = background + rate * process::excitation(w, tp, kernel);
                let scale = rate * y as f64 / lambda.max(lambda_floor);
                for lag in 1..=kernel.len().min(tp) {
                    r_row[tp - lag] += scale * kernel.at(lag);
                }
            }
            r_row
        })
        .collect();
    Array2::from_shape_fn((n, t_len), |(i, t)| rows[i][t])
}

/// Share of each `λ_i(t')` explained by its sources: the background plus
/// `Σ_t w_it R(x_it') φ(t' − t) / λ_i(t')`. Equals 1 wherever `λ` exceeds
/// the floor; NaN where `y_it' = 0` or `λ ≤ floor`.
pub fn attribution_sums(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    mark: &MarkModel,
    kernel: &Kernel,
    import: ImportTerm,
    lambda_floor: f64,
) -> Array2<f64> {
    let weights = process::source_weights(panel, correction, import);
    let (n, t_len) = (panel.n_regions(), panel.n_days());
    let bg = import.background();
    Array2::from_shape_fn((n, t_len), |(i, tp)| {
        if panel.case(i, tp) == 0 {
            return f64::NAN;
        }
        let rate = mark.rate(panel.covariates_at(i, tp));
        let mut parts = Vec::with_capacity(kernel.len());
        for lag in 1..=kernel.len().min(tp) {
            parts.push(weights[[i, tp - lag]] * rate * kernel.at(lag));
        }
        let lambda = bg + parts.iter().sum::<f64>();
        if lambda <= lambda_floor {
            return f64::NAN;
        }
        bg / lambda + parts.iter().map(|p| p / lambda).sum::<f64>()
    })
}

/// Last zero-based day whose response enters the M-step, plus one.
pub fn fit_day_limit(n_days: usize, kernel_len: usize, tail_correction: bool) -> usize {
    if tail_correction {
        n_days
    } else {
        n_days.saturating_sub(kernel_len.div_ceil(2))
    }
}

/// Fits on every region of the panel.
pub fn fit_em(
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    kernel: &Kernel,
    config: &EmConfig,
) -> Result<FittedMmhm> {
    let correction = process::compute_correction(panel, mobility)?;
    fit_em_masked(panel, &correction, kernel, config, None)
}

/// EM restricted to the regions flagged in `regions` (all when `None`).
///
/// Excluded regions still contribute to other regions' travel correction
/// through `correction`; they only leave the M-step.
pub fn fit_em_masked(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    kernel: &Kernel,
    config: &EmConfig,
    regions: Option<&[bool]>,
) -> Result<FittedMmhm> {
    fit_em_from(panel, correction, kernel, config, regions, None)
}

/// [`fit_em_masked`] started from `start` instead of `R ≡ 1`. Only the
/// coefficients of `start` are used; standardization is recomputed.
pub fn fit_em_from(
    panel: &RegionPanel,
    correction: &CorrectionSeries,
    kernel: &Kernel,
    config: &EmConfig,
    regions: Option<&[bool]>,
    start: Option<&MarkModel>,
) -> Result<FittedMmhm> {
    config.validate()?;
    let (n, t_len) = (panel.n_regions(), panel.n_days());
    if correction.n_hat.dim() != (n, t_len) {
        return Err(Error::Parameter("correction series does not match panel".into()));
    }
    let all = vec![true; n];
    let mask = regions.unwrap_or(&all);
    if mask.len() != n || !mask.iter().any(|&m| m) {
        return Err(Error::Parameter("region mask must select at least one region".into()));
    }

    let names = panel.covariate_names().to_vec();
    let p = names.len();
    let train: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();

    // Standardization statistics over all days of the training regions.
    let mut raw_all = Array2::zeros((train.len() * t_len, p));
    for (k, &i) in train.iter().enumerate() {
        for t in 0..t_len {
            raw_all
                .row_mut(k * t_len + t)
                .assign(&panel.covariates_at(i, t));
        }
    }
    let stats = mark::standardize_rows(raw_all.view(), &names)?;

    let weights = process::source_weights(panel, correction, config.import);
    let day_limit = fit_day_limit(t_len, kernel.len(), config.tail_correction);
    let rows: Vec<(usize, usize)> = train
        .iter()
        .flat_map(|&i| (0..day_limit).map(move |t| (i, t)))
        .filter(|&(i, t)| weights[[i, t]] > 0.0)
        .collect();
    if rows.is_empty() {
        return Err(Error::Estimation(
            "no region-day has a positive source weight inside the fit window".into(),
        ));
    }
    let mut raw_rows = Array2::zeros((rows.len(), p));
    for (k, &(i, t)) in rows.iter().enumerate() {
        raw_rows.row_mut(k).assign(&panel.covariates_at(i, t));
    }
    let design = mark::Standardized {
        x: stats.apply(raw_rows.view()),
        means: stats.means.clone(),
        sds: stats.sds.clone(),
        names: names.clone(),
    };
    let tail_mass: Vec<f64> = (0..t_len)
        .map(|t| kernel.mass_up_to(t_len - 1 - t) / kernel.mass())
        .collect();

    let mut mark_model = MarkModel::unit(&names);
    if let Some(s) = start {
        if s.covariate_names != names {
            return Err(Error::Parameter("starting mark has different covariates".into()));
        }
        mark_model.beta0 = s.beta0;
        mark_model.theta = s.theta.clone();
        mark_model.means = stats.means.clone();
        mark_model.sds = stats.sds.clone();
    }
    let mut previous = mark_model.parameter_vector();
    let mut r_hat = Array2::zeros((n, t_len));
    let mut converged = false;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let bg = config.import.background();

    while iterations < config.max_iter {
        iterations += 1;
        let rates = mark_values(panel, &mark_model);
        r_hat = e_step_with(panel, &weights, &rates, kernel, bg, config.lambda_floor);
        if config.tail_correction {
            for ((_, t), v) in r_hat.indexed_iter_mut() {
                if tail_mass[t] > 0.0 {
                    *v /= tail_mass[t];
                }
            }
        }
        let responses: Vec<f64> = rows.iter().map(|&(i, t)| r_hat[[i, t]]).collect();
        let problem = MarkFitProblem {
            design: design.clone(),
            r: responses,
            xi: config.xi,
        };
        // warm start: the design is fixed across iterations
        mark_model = mark::fit_poisson_lasso_from(&problem, &config.lasso, Some(&mark_model.theta))?.model;
        let current = mark_model.parameter_vector();
        change = current
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).abs())
            .sum();
        previous = current;
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let sums = attribution_sums(panel, correction, &mark_model, kernel, config.import, config.lambda_floor);
    let attribution_residual = train
        .iter()
        .flat_map(|&i| sums.row(i).to_vec())
        .filter(|v| v.is_finite())
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);

    Ok(FittedMmhm {
        mark: mark_model,
        kernel: kernel.clone(),
        import: config.import,
        xi: config.xi,
        r_hat,
        fit_rows: rows.len(),
        iterations,
        converged,
        final_change: change,
        attribution_residual,
        metadata: BTreeMap::new(),
    })
}
