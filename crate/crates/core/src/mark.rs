//! The mark: a log-linear reproduction number `R(x) = exp(β₀ + θᵀx)`.
//!
//! Covariates are standardized before fitting and the standardization
//! statistics travel with the model, so [`MarkModel::predict`] takes raw
//! covariate vectors. Coefficients are estimated by minimizing
//!
//! ```text
//!   (1/n) Σ_k [ exp(β₀ + θᵀx_k) − r_k (β₀ + θᵀx_k) ] + ξ ‖θ‖₁
//! ```
//!
//! over the included rows, with an unpenalized intercept. Responses `r_k` are
//! real-valued expected offspring counts, so this is a Poisson
//! quasi-likelihood.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest linear predictor passed to `exp`.
const MAX_ETA: f64 = 700.0;

/// Fitted mark regression with its standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkModel {
    pub beta0: f64,
    pub theta: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub covariate_names: Vec<String>,
}

impl MarkModel {
    /// `R ≡ 1`, the EM starting point.
    pub fn unit(covariate_names: &[String]) -> Self {
        let p = covariate_names.len();
        Self {
            beta0: 0.0,
            theta: vec![0.0; p],
            means: vec![0.0; p],
            sds: vec![1.0; p],
            covariate_names: covariate_names.to_vec(),
        }
    }

    /// Model acting directly on raw covariates (zero means, unit SDs).
    pub fn from_raw(beta0: f64, theta: Vec<f64>, covariate_names: Vec<String>) -> Result<Self> {
        if theta.len() != covariate_names.len() {
            return Err(Error::Parameter(format!(
                "{} coefficients for {} covariates",
                theta.len(),
                covariate_names.len()
            )));
        }
        let p = theta.len();
        Ok(Self {
            beta0,
            theta,
            means: vec![0.0; p],
            sds: vec![1.0; p],
            covariate_names,
        })
    }

    pub fn n_covariates(&self) -> usize {
        self.theta.len()
    }

    /// Linear predictor on raw covariates, without dimension checks.
    #[inline]
    pub fn linear_predictor(&self, x_raw: ArrayView1<'_, f64>) -> f64 {
        let mut eta = self.beta0;
        for j in 0..self.theta.len() {
            if self.theta[j] != 0.0 {
                eta += self.theta[j] * (x_raw[j] - self.means[j]) / self.sds[j];
            }
        }
        eta
    }

    /// `R(x)` on a raw covariate vector, without dimension checks.
    #[inline]
    pub fn rate(&self, x_raw: ArrayView1<'_, f64>) -> f64 {
        self.linear_predictor(x_raw).min(MAX_ETA).exp()
    }

    /// `R(x)` on a raw covariate vector.
    pub fn predict(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.theta.len() {
            return Err(Error::Parameter(format!(
                "covariate vector has {} entries, model expects {}",
                x_raw.len(),
                self.theta.len()
            )));
        }
        Ok(self.rate(ArrayView1::from(x_raw)))
    }

    /// Intercept and coefficients expressed on the raw covariate scale.
    pub fn raw_coefficients(&self) -> (f64, Vec<f64>) {
        let theta: Vec<f64> = self.theta.iter().zip(&self.sds).map(|(t, s)| t / s).collect();
        let beta0 = self.beta0 - theta.iter().zip(&self.means).map(|(t, m)| t * m).sum::<f64>();
        (beta0, theta)
    }

    pub fn l1_norm(&self) -> f64 {
        self.theta.iter().map(|t| t.abs()).sum()
    }

    /// `[β₀, θ...]`, the vector EM convergence is measured on.
    pub fn parameter_vector(&self) -> Vec<f64> {
        std::iter::once(self.beta0).chain(self.theta.iter().copied()).collect()
    }
}

/// Standardized design matrix with the statistics needed to invert it.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub x: Array2<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub names: Vec<String>,
}

impl Standardized {
    /// Maps the standardized matrix back to raw values.
    pub fn inverse(&self) -> Array2<f64> {
        let mut raw = self.x.clone();
        for (j, mut col) in raw.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| v * self.sds[j] + self.means[j]);
        }
        raw
    }

    /// Applies the stored statistics to new raw rows.
    pub fn apply(&self, raw: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = raw.to_owned();
        for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.mapv_inplace(|v| (v - self.means[j]) / self.sds[j]);
        }
        out
    }
}

/// Standardizes the columns of a row matrix to mean 0 and sample SD 1.
pub fn standardize_rows(raw: ArrayView2<'_, f64>, names: &[String]) -> Result<Standardized> {
    let (n, p) = raw.dim();
    if names.len() != p {
        return Err(Error::Parameter(format!("{p} columns but {} names", names.len())));
    }
    if n < 2 && p > 0 {
        return Err(Error::Estimation("standardization needs at least two rows".into()));
    }
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for (j, col) in raw.axis_iter(Axis(1)).enumerate() {
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        let scale = mean.abs().max(1.0);
        if !(sd > 1e-12 * scale) {
            return Err(Error::Estimation(format!(
                "covariate {} has zero variance",
                names[j]
            )));
        }
        means.push(mean);
        sds.push(sd);
    }
    let mut x = raw.to_owned();
    for (j, mut col) in x.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| (v - means[j]) / sds[j]);
    }
    Ok(Standardized {
        x,
        means,
        sds,
        names: names.to_vec(),
    })
}

/// Flattens an `N x T x p` covariate tensor into region-major rows and
/// standardizes them.
pub fn standardize(covariates: &Array3<f64>, names: &[String]) -> Result<Standardized> {
    let (n, t, p) = covariates.dim();
    let rows = covariates
        .to_shape((n * t, p))
        .map_err(|e| Error::Parameter(format!("cannot flatten covariates: {e}")))?;
    standardize_rows(rows.view(), names)
}

/// One M-step regression problem.
#[derive(Debug, Clone)]
pub struct MarkFitProblem {
    /// Standardized design, one row per included region-day.
    pub design: Standardized,
    /// Non-negative responses aligned with the design rows.
    pub r: Vec<f64>,
    /// Lasso penalty on the mean-likelihood scale.
    pub xi: f64,
}

impl MarkFitProblem {
    fn validate(&self) -> Result<()> {
        if self.design.x.nrows() != self.r.len() {
            return Err(Error::Parameter(format!(
                "{} design rows but {} responses",
                self.design.x.nrows(),
                self.r.len()
            )));
        }
        if self.r.is_empty() {
            return Err(Error::Estimation("mark regression has no rows".into()));
        }
        if let Some(v) = self.r.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Parameter(format!("responses must be finite and >= 0, got {v}")));
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err(Error::Parameter(format!("penalty must be >= 0, got {}", self.xi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoSettings {
    pub max_iter: usize,
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-8,
            max_sweeps: 1_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub model: MarkModel,
    pub iterations: usize,
    pub objective: f64,
    /// False when the iteration budget ran out first.
    pub converged: bool,
}

/// Penalized objective at `(beta0, theta)` on a standardized design.
pub fn objective(x: ArrayView2<'_, f64>, r: &[f64], xi: f64, beta0: f64, theta: &[f64]) -> f64 {
    let n = r.len() as f64;
    let mut loss = 0.0;
    for (row, &rk) in x.axis_iter(Axis(0)).zip(r) {
        let eta = beta0 + dot(row, theta);
        loss += eta.min(MAX_ETA).exp() - rk * eta;
    }
    loss / n + xi * theta.iter().map(|t| t.abs()).sum::<f64>()
}

#[inline]
fn dot(row: ArrayView1<'_, f64>, theta: &[f64]) -> f64 {
    row.iter().zip(theta).map(|(a, b)| a * b).sum()
}

/// Solves `(XᵀWX/n + damping·s·I) d = XᵀW res/n` by Cholesky, with `s` the
/// largest diagonal entry; `None` when the system is not numerically
/// positive definite.
fn newton_direction(x: ArrayView2<'_, f64>, w: &[f64], res: &[f64], nf: f64, damping: f64) -> Option<Vec<f64>> {
    let p = x.ncols();
    let mut a = vec![0.0; p * p];
    let mut b = vec![0.0; p];
    for (k, row) in x.axis_iter(Axis(0)).enumerate() {
        for i in 0..p {
            let wi = w[k] * row[i];
            b[i] += wi * res[k] / nf;
            for j in 0..=i {
                a[i * p + j] += wi * row[j] / nf;
            }
        }
    }
    let scale = (0..p).map(|i| a[i * p + i]).fold(0.0, f64::max);
    if !(scale > 0.0 && scale.is_finite()) {
        return None;
    }
    for i in 0..p {
        a[i * p + i] += damping * scale;
    }
    // lower-triangular factor in place
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > 1e-12 * scale) {
            return None;
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in j + 1..p {
            let mut v = a[i * p + j];
            for k in 0..j {
                v -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = v / d;
        }
    }
    for i in 0..p {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * p + k] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    for i in (0..p).rev() {
        let mut v = b[i];
        for k in i + 1..p {
            v -= a[k * p + i] * b[k];
        }
        b[i] = v / a[i * p + i];
    }
    Some(b)
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Fits the mark with default solver settings.
pub fn fit_poisson_lasso(problem: &MarkFitProblem) -> Result<MarkModel> {
    Ok(fit_poisson_lasso_with(problem, &LassoSettings::default())?.model)
}

/// Proximal Newton: each outer step minimizes the local quadratic model of the
/// Poisson loss plus the L1 term by coordinate descent, then backtracks on the
/// true objective. The intercept is re-solved in closed form after every step.
pub fn fit_poisson_lasso_with(problem: &MarkFitProblem, settings: &LassoSettings) -> Result<LassoFit> {
    let fit = fit_poisson_lasso_from(problem, settings, None)?;
    if !fit.converged {
        return Err(Error::Estimation(format!(
            "Poisson lasso did not converge in {} iterations (objective {})",
            settings.max_iter, fit.objective
        )));
    }
    Ok(fit)
}

/// As [`fit_poisson_lasso_with`], starting from standardized-scale slopes
/// `start` (the intercept is re-solved for them). Running out of iterations
/// is not an error here; the last iterate comes back with `converged` unset.
pub fn fit_poisson_lasso_from(
    problem: &MarkFitProblem,
    settings: &LassoSettings,
    start: Option<&[f64]>,
) -> Result<LassoFit> {
    problem.validate()?;
    let x = problem.design.x.view();
    let r = &problem.r;
    let xi = problem.xi;
    let (n, p) = x.dim();
    let nf = n as f64;
    let r_sum: f64 = r.iter().sum();
    if !(r_sum > 0.0) {
        return Err(Error::Estimation(
            "all mark responses are zero; the intercept is unbounded".into(),
        ));
    }

    let mut theta = match start {
        Some(t) if t.len() == p && t.iter().all(|v| v.is_finite()) => t.to_vec(),
        Some(t) => {
            return Err(Error::Parameter(format!(
                "starting slopes have length {}, expected {p}",
                t.len()
            )))
        }
        None => vec![0.0; p],
    };
    let mut eta: Vec<f64> = x.axis_iter(Axis(0)).map(|row| dot(row, &theta)).collect();
    let e_sum: f64 = eta.iter().map(|v| v.min(MAX_ETA).exp()).sum();
    let mut beta0 = if start.is_some() && e_sum > 0.0 && e_sum.is_finite() {
        (r_sum / e_sum).ln()
    } else {
        (r_sum / nf).ln()
    };
    if start.is_none() {
        theta.iter_mut().for_each(|v| *v = 0.0);
    }
    eta.iter_mut().for_each(|v| *v += beta0);
    let mut f_cur = objective(x, r, xi, beta0, &theta);

    let finish = |beta0: f64, theta: Vec<f64>, iterations: usize, objective: f64, converged: bool| LassoFit {
        model: MarkModel {
            beta0,
            theta,
            means: problem.design.means.clone(),
            sds: problem.design.sds.clone(),
            covariate_names: problem.design.names.clone(),
        },
        iterations,
        objective,
        converged,
    };

    if p == 0 {
        return Ok(finish(beta0, theta, 0, f_cur, true));
    }

    let mut w = vec![0.0; n];
    let mut res = vec![0.0; n];
    let mut centered = Array2::<f64>::zeros((n, p));
    let mut h = vec![0.0; p];

    for iter in 1..=settings.max_iter {
        // Weighted least-squares model around the current point, with the
        // columns centred under the weights so the intercept decouples.
        let mut w_sum = 0.0;
        let mut z_mean = 0.0;
        for k in 0..n {
            let mu = eta[k].min(MAX_ETA).exp();
            w[k] = mu;
            w_sum += mu;
            z_mean += mu * (eta[k] + (r[k] - mu) / mu);
        }
        z_mean /= w_sum;
        let mut col_means = vec![0.0; p];
        for j in 0..p {
            let col = x.column(j);
            let m = col.iter().zip(&w).map(|(v, wk)| v * wk).sum::<f64>() / w_sum;
            col_means[j] = m;
            let mut hj = 0.0;
            for (k, v) in col.iter().enumerate() {
                let c = v - m;
                centered[[k, j]] = c;
                hj += w[k] * c * c;
            }
            h[j] = hj / nf;
        }
        let mut nt = theta.clone();
        for k in 0..n {
            let z = eta[k] + (r[k] - w[k]) / w[k];
            let fit: f64 = (0..p).map(|j| centered[[k, j]] * nt[j]).sum();
            res[k] = z - z_mean - fit;
        }
        // Without a penalty the model is plain weighted least squares.
        // Near-singular systems get increasing ridge damping; backtracking
        // keeps the damped step a descent step.
        let exact = if xi == 0.0 {
            [0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2]
                .iter()
                .find_map(|&damping| newton_direction(centered.view(), &w, &res, nf, damping))
        } else {
            None
        };
        if let Some(d) = &exact {
            nt.iter_mut().zip(d).for_each(|(t, dj)| *t += dj);
        }
        for _ in 0..if exact.is_some() { 0 } else { settings.max_sweeps } {
            let mut sweep_change: f64 = 0.0;
            for j in 0..p {
                if h[j] <= 0.0 {
                    continue;
                }
                let col = centered.column(j);
                let grad: f64 = col
                    .iter()
                    .zip(&w)
                    .zip(&res)
                    .map(|((v, wk), rk)| v * wk * rk)
                    .sum::<f64>()
                    / nf;
                let updated = soft_threshold(grad + h[j] * nt[j], xi) / h[j];
                let d = updated - nt[j];
                if d != 0.0 {
                    for (rk, v) in res.iter_mut().zip(col.iter()) {
                        *rk -= d * v;
                    }
                    nt[j] = updated;
                    sweep_change = sweep_change.max(d.abs());
                }
            }
            if sweep_change < settings.tol * 0.1 {
                break;
            }
        }
        let nb = z_mean - col_means.iter().zip(&nt).map(|(m, t)| m * t).sum::<f64>();

        // Backtracking along the proposed direction.
        let d0 = nb - beta0;
        let dt: Vec<f64> = nt.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let cb = beta0 + step * d0;
            let ct: Vec<f64> = theta.iter().zip(&dt).map(|(t, d)| t + step * d).collect();
            let fc = objective(x, r, xi, cb, &ct);
            if fc <= f_cur + 1e-14 * f_cur.abs().max(1.0) {
                accepted = Some((cb, ct));
                break;
            }
            step *= 0.5;
        }
        let (cb, ct) = accepted.unwrap_or((beta0, theta.clone()));

        // Exact intercept for the new coefficients.
        let mut lin = vec![0.0; n];
        let mut e_sum = 0.0;
        for (k, row) in x.axis_iter(Axis(0)).enumerate() {
            lin[k] = dot(row, &ct);
            e_sum += lin[k].min(MAX_ETA).exp();
        }
        let cb = if e_sum > 0.0 && e_sum.is_finite() {
            (r_sum / e_sum).ln()
        } else {
            cb
        };
        for k in 0..n {
            eta[k] = cb + lin[k];
        }

        let change = ct
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold((cb - beta0).abs(), f64::max);
        beta0 = cb;
        theta = ct;
        f_cur = objective(x, r, xi, beta0, &theta);
        if !f_cur.is_finite() {
            return Err(Error::Estimation(format!(
                "mark objective diverged at iteration {iter}"
            )));
        }
        if change < settings.tol {
            return Ok(finish(beta0, theta, iter, f_cur, true));
        }
    }
    Ok(finish(beta0, theta, settings.max_iter, f_cur, false))
}
