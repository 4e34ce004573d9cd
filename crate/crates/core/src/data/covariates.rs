use std::ops::Range;

use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};

/// Within-region mobility indices: trips on each day divided by the mean
/// over `reference` days, per region and category.
///
/// `within` is `N x T x z`; so is the result.
pub fn build_within_mobility_covariates(within: &Array3<f64>, reference: Range<usize>) -> Result<Array3<f64>> {
    let (n, t, z) = within.dim();
    check_reference(&reference, t)?;
    let mut out = Array3::zeros((n, t, z));
    for i in 0..n {
        for c in 0..z {
            let base = within.slice(s![i, reference.clone(), c]).mean().unwrap_or(0.0);
            if !(base > 0.0) {
                return Err(Error::data(format!(
                    "region {} category {} has zero trips over the reference window",
                    i + 1,
                    c + 1
                )));
            }
            for d in 0..t {
                out[[i, d, c]] = within[[i, d, c]] / base;
            }
        }
    }
    Ok(out)
}

/// Incoming-trip index per region: trips from other regions on each day
/// divided by the mean over `reference` days. `od` is `T x N x N`
/// (origin, destination); the result is `N x T`.
pub fn build_between_covariates(od: &Array3<f64>, reference: Range<usize>) -> Result<Array2<f64>> {
    let (t, n, _) = od.dim();
    check_reference(&reference, t)?;
    let mut incoming = Array2::zeros((n, t));
    for d in 0..t {
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    incoming[[to, d]] += od[[d, from, to]];
                }
            }
        }
    }
    for i in 0..n {
        let base = incoming.slice(s![i, reference.clone()]).mean().unwrap_or(0.0);
        if !(base > 0.0) {
            return Err(Error::data(format!(
                "region {} has no incoming trips over the reference window",
                i + 1
            )));
        }
        incoming.row_mut(i).mapv_inplace(|v| v / base);
    }
    Ok(incoming)
}

fn check_reference(reference: &Range<usize>, n_days: usize) -> Result<()> {
    if reference.is_empty() || reference.end > n_days {
        return Err(Error::data(format!(
            "reference window {}..{} must hold at least one of the {n_days} days",
            reference.start, reference.end
        )));
    }
    Ok(())
}
