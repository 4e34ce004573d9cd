use rayon::prelude::*;

use super::cv::{loro_cv, CvConfig};
use super::FitSpec;
use crate::domain::{Kernel, MobilityTensor, RegionPanel};
use crate::error::{Error, Result};

/// `(α, ξ)` search grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub alphas: Vec<f64>,
    pub xis: Vec<f64>,
}

impl Default for Grid {
    /// α ∈ {0, 0.25, …, 3}, ξ ∈ {0, 2, …, 20}.
    fn default() -> Self {
        Self {
            alphas: (0..=12).map(|k| k as f64 * 0.25).collect(),
            xis: (0..=10).map(|k| k as f64 * 2.0).collect(),
        }
    }
}

impl Grid {
    pub fn single(alpha: f64, xi: f64) -> Self {
        Self {
            alphas: vec![alpha],
            xis: vec![xi],
        }
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.alphas
            .iter()
            .flat_map(|&a| self.xis.iter().map(move |&x| (a, x)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub xi: f64,
    pub cv_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub grid: Vec<GridCell>,
    pub best_alpha: f64,
    pub best_xi: f64,
}

impl TuneResult {
    /// Picks the smallest CV RMSE; ties go to smaller α, then smaller ξ.
    pub fn from_cells(grid: Vec<GridCell>) -> Result<Self> {
        let best = grid
            .iter()
            .filter(|c| c.cv_rmse.is_finite())
            .min_by(|a, b| {
                a.cv_rmse
                    .total_cmp(&b.cv_rmse)
                    .then(a.alpha.total_cmp(&b.alpha))
                    .then(a.xi.total_cmp(&b.xi))
            })
            .copied()
            .ok_or_else(|| Error::Estimation("no grid cell produced a finite CV error".into()))?;
        Ok(Self {
            grid,
            best_alpha: best.alpha,
            best_xi: best.xi,
        })
    }

    pub fn best(&self) -> GridCell {
        *self
            .grid
            .iter()
            .find(|c| c.alpha == self.best_alpha && c.xi == self.best_xi)
            .expect("best cell is on the grid")
    }
}

/// Grid search over `(α, ξ)` by leave-one-region-out macro RMSE.
///
/// `base` supplies the EM settings; its import must be the travel variant.
pub fn tune(
    panel: &RegionPanel,
    mobility: &MobilityTensor,
    kernel: &Kernel,
    grid: &Grid,
    base: &FitSpec,
    cv: &CvConfig,
) -> Result<TuneResult> {
    if grid.alphas.is_empty() || grid.xis.is_empty() {
        return Err(Error::Parameter("tuning grid is empty".into()));
    }
    if panel.n_regions() < 2 {
        return Err(Error::Parameter("tuning needs at least two regions".into()));
    }
    if grid.alphas.iter().chain(&grid.xis).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Parameter("grid values must be finite and >= 0".into()));
    }
    let results: Vec<Result<GridCell>> = grid
        .cells()
        .into_par_iter()
        .map(|(alpha, xi)| {
            let spec = base.with_alpha_xi(alpha, xi);
            let res = loro_cv(panel, mobility, kernel, &spec, cv)?;
            Ok(GridCell {
                alpha,
                xi,
                cv_rmse: res.report.macro_rmse,
            })
        })
        .collect();
    TuneResult::from_cells(results.into_iter().collect::<Result<Vec<_>>>()?)
}
