use crate::domain::special::normal_sf;
use crate::error::{Error, Result};

/// Largest number of non-zero pairs that uses the exact null distribution.
const EXACT_MAX_N: usize = 25;
const MIN_PAIRS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    /// Two-sided p-value.
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on `a − b`.
///
/// Zero differences are dropped and tied magnitudes get mid-ranks. The null
/// distribution is enumerated exactly for up to 25 pairs; above that a
/// normal approximation with continuity and tie corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("paired samples must be finite".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n < MIN_PAIRS {
        return Err(Error::InsufficientData(format!(
            "Wilcoxon test needs at least {MIN_PAIRS} non-zero differences, got {n}"
        )));
    }

    // Mid-ranks of |d|, stored doubled so they stay integral.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut doubled = vec![0u64; n];
    let mut tie_term = 0.0;
    let mut k = 0;
    while k < n {
        let mut m = k;
        while m + 1 < n && diffs[order[m + 1]].abs() == diffs[order[k]].abs() {
            m += 1;
        }
        // ranks k+1..=m+1 share (k+1 + m+1) / 2
        let twice_mid = (k + 1 + m + 1) as u64;
        for &idx in &order[k..=m] {
            doubled[idx] = twice_mid;
        }
        let t = (m - k + 1) as f64;
        tie_term += t * t * t - t;
        k = m + 1;
    }

    let w_plus2: u64 = (0..n).filter(|&i| diffs[i] > 0.0).map(|i| doubled[i]).sum();
    let total2: u64 = doubled.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let stat2 = w_plus2.min(w_minus2);

    let (p_value, exact) = if n <= EXACT_MAX_N {
        // counts[s] = number of sign assignments with doubled W+ == s
        let mut counts = vec![0f64; total2 as usize + 1];
        counts[0] = 1.0;
        let mut reach = 0usize;
        for &r in &doubled {
            let r = r as usize;
            for s in (0..=reach).rev() {
                if counts[s] != 0.0 {
                    counts[s + r] += counts[s];
                }
            }
            reach += r;
        }
        let lower: f64 = counts[..=stat2 as usize].iter().sum();
        let p = 2.0 * lower / 2f64.powi(n as i32);
        (p.min(1.0), true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let w_plus = w_plus2 as f64 / 2.0;
        let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
        ((2.0 * normal_sf(z)).min(1.0), false)
    };

    Ok(WilcoxonResult {
        statistic: stat2 as f64 / 2.0,
        w_plus: w_plus2 as f64 / 2.0,
        w_minus: w_minus2 as f64 / 2.0,
        n,
        p_value,
        exact,
    })
}
