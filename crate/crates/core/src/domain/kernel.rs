//! Discretized incubation-time kernel.

use serde::{Deserialize, Serialize};

use super::special;
use crate::error::{Error, Result};

/// Gamma shape of the incubation distribution.
pub const INCUBATION_SHAPE: f64 = 5.807;
/// Gamma scale (days) of the incubation distribution.
pub const INCUBATION_SCALE: f64 = 1.055;
/// Default truncation lag in days.
pub const DEFAULT_TRUNCATION: usize = 30;

/// Gamma CDF `F(x; shape, scale)`, i.e. `P(shape, x / scale)`.
pub fn gamma_cdf(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("gamma_cdf needs x >= 0, got {x}")));
    }
    if !(shape > 0.0) || !(scale > 0.0) {
        return Err(Error::Parameter(format!(
            "gamma_cdf needs positive shape and scale, got ({shape}, {scale})"
        )));
    }
    special::gamma_p(shape, x / scale)
}

/// Probability of an offspring case `l` days after its parent, `l = 1..=L`.
///
/// `probs[0]` holds the lag-1 mass `F(1.5)`, which absorbs the `[0, 0.5]`
/// interval; `probs[l - 1] = F(l + 0.5) - F(l - 0.5)` for `l >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    probs: Vec<f64>,
    shape: Option<f64>,
    scale: Option<f64>,
    renormalized: bool,
}

impl Kernel {
    /// Kernel used throughout the model: Gamma(5.807, 1.055) truncated at 30
    /// days and renormalized.
    pub fn incubation() -> Self {
        discretize_gamma(INCUBATION_SHAPE, INCUBATION_SCALE, DEFAULT_TRUNCATION, true)
            .expect("default kernel parameters are valid")
    }

    /// Builds a kernel from explicit lag probabilities (lag 1 first).
    ///
    /// Such kernels carry no Gamma parameters.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("kernel needs at least one lag".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Parameter("kernel probabilities must be finite and >= 0".into()));
        }
        Ok(Self {
            probs,
            shape: None,
            scale: None,
            renormalized: false,
        })
    }

    /// Truncation lag `L`.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `φ(lag)`; zero outside `1..=L`.
    #[inline]
    pub fn at(&self, lag: usize) -> f64 {
        if lag == 0 || lag > self.probs.len() {
            0.0
        } else {
            self.probs[lag - 1]
        }
    }

    /// Lag probabilities, lag 1 first.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn shape(&self) -> Option<f64> {
        self.shape
    }

    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Mass on lags `1..=max_lag`.
    pub fn mass_up_to(&self, max_lag: usize) -> f64 {
        self.probs.iter().take(max_lag).sum()
    }

    /// Lag with the largest probability (1-based).
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best + 1
    }
}

/// Discretizes a Gamma(shape, scale) distribution onto integer day lags.
pub fn discretize_gamma(shape: f64, scale: f64, truncation: usize, renormalize: bool) -> Result<Kernel> {
    if !(shape > 0.0 && shape.is_finite()) || !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!(
            "kernel needs positive shape and scale, got ({shape}, {scale})"
        )));
    }
    if truncation < 2 {
        return Err(Error::Parameter(format!(
            "kernel truncation must be at least 2 days, got {truncation}"
        )));
    }
    let mut probs = Vec::with_capacity(truncation);
    let mut prev = gamma_cdf(1.5, shape, scale)?;
    probs.push(prev);
    for lag in 2..=truncation {
        let upper = gamma_cdf(lag as f64 + 0.5, shape, scale)?;
        probs.push((upper - prev).max(0.0));
        prev = upper;
    }
    if renormalize {
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Parameter("kernel has no mass on the truncated support".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(Kernel {
        probs,
        shape: Some(shape),
        scale: Some(scale),
        renormalized: renormalize,
    })
}
