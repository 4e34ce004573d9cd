//! Error metrics, score reports, the naive Hawkes baseline, and the
//! Wilcoxon signed-rank test.

mod baseline;
mod wilcoxon;

pub use baseline::{
    baseline_panel, baseline_spec, naive_hawkes_baseline, Demographics, NaiveBaseline,
};
pub use wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};

use std::fmt;

use crate::error::{Error, Result};

/// RMSE and MAE of a point forecast.
pub fn score(actual: &[f64], predicted: &[f64]) -> Result<(f64, f64)> {
    if actual.is_empty() {
        return Err(Error::Parameter("cannot score an empty series".into()));
    }
    if actual.len() != predicted.len() {
        return Err(Error::Parameter(format!(
            "series lengths differ: {} actual vs {} predicted",
            actual.len(),
            predicted.len()
        )));
    }
    let n = actual.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let e = a - p;
        se += e * e;
        ae += e.abs();
    }
    Ok(((se / n).sqrt(), ae / n))
}

/// Scores of one `(region, horizon)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCell {
    pub region: String,
    pub horizon: usize,
    pub rmse: f64,
    pub mae: f64,
}

/// Per-cell scores with unweighted macro averages over regions and horizons.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub per_region: Vec<ScoreCell>,
    pub macro_rmse: f64,
    pub macro_mae: f64,
}

impl ScoreReport {
    pub fn from_cells(per_region: Vec<ScoreCell>) -> Result<Self> {
        if per_region.is_empty() {
            return Err(Error::Parameter("score report needs at least one cell".into()));
        }
        let n = per_region.len() as f64;
        let macro_rmse = per_region.iter().map(|c| c.rmse).sum::<f64>() / n;
        let macro_mae = per_region.iter().map(|c| c.mae).sum::<f64>() / n;
        Ok(Self {
            per_region,
            macro_rmse,
            macro_mae,
        })
    }

    /// Macro averages restricted to horizons in `lo..=hi`.
    pub fn macro_over_horizons(&self, lo: usize, hi: usize) -> Option<(f64, f64)> {
        let cells: Vec<&ScoreCell> = self
            .per_region
            .iter()
            .filter(|c| c.horizon >= lo && c.horizon <= hi)
            .collect();
        if cells.is_empty() {
            return None;
        }
        let n = cells.len() as f64;
        Some((
            cells.iter().map(|c| c.rmse).sum::<f64>() / n,
            cells.iter().map(|c| c.mae).sum::<f64>() / n,
        ))
    }

    /// Per-region RMSE averaged over horizons, in first-seen region order.
    pub fn region_rmse(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64, usize)> = Vec::new();
        for c in &self.per_region {
            match out.iter_mut().find(|(r, _, _)| *r == c.region) {
                Some(entry) => {
                    entry.1 += c.rmse;
                    entry.2 += 1;
                }
                None => out.push((c.region.clone(), c.rmse, 1)),
            }
        }
        out.into_iter().map(|(r, s, k)| (r, s / k as f64)).collect()
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>7} {:>12} {:>12}", "region", "horizon", "rmse", "mae")?;
        for c in &self.per_region {
            writeln!(f, "{:<8} {:>7} {:>12.4} {:>12.4}", c.region, c.horizon, c.rmse, c.mae)?;
        }
        write!(
            f,
            "{:<8} {:>7} {:>12.4} {:>12.4}",
            "macro", "all", self.macro_rmse, self.macro_mae
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic() {
        assert_eq!(score(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (rmse, mae) = score(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert!((rmse - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse - 3.53553).abs() < 1e-5);
        assert_eq!(mae, 3.5);
    }

    #[test]
    fn empty_and_mismatched() {
        assert!(score(&[], &[]).is_err());
        assert!(score(&[1.0], &[1.0, 2.0]).is_err());
        assert!(ScoreReport::from_cells(vec![]).is_err());
    }

    #[test]
    fn macro_is_cell_mean() {
        let cells = vec![
            ScoreCell { region: "A".into(), horizon: 1, rmse: 1.0, mae: 0.5 },
            ScoreCell { region: "A".into(), horizon: 2, rmse: 3.0, mae: 2.5 },
            ScoreCell { region: "B".into(), horizon: 1, rmse: 2.0, mae: 1.0 },
        ];
        let r = ScoreReport::from_cells(cells).unwrap();
        assert_eq!(r.macro_rmse, 2.0);
        assert_eq!(r.macro_mae, 4.0 / 3.0);
        assert_eq!(r.region_rmse(), vec![("A".to_string(), 2.0), ("B".to_string(), 2.0)]);
        assert_eq!(r.macro_over_horizons(2, 2), Some((3.0, 2.5)));
        assert!(r.to_string().contains("macro"));
    }
}
