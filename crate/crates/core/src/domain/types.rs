use ndarray::{s, Array2, Array3, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense region index, `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionId(pub usize);

/// Day of the study period, counted from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayIndex(pub usize);

impl DayIndex {
    /// Zero-based array offset of this day.
    ///
    /// # Panics
    /// If the day is 0.
    #[inline]
    pub fn offset(self) -> usize {
        assert!(self.0 >= 1, "days are counted from 1");
        self.0 - 1
    }

    #[inline]
    pub fn from_offset(offset: usize) -> Self {
        DayIndex(offset + 1)
    }
}

/// Per-region daily case counts, covariates, and populations.
///
/// `cases` is `N x T`, `covariates` is `N x T x p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPanel {
    codes: Vec<String>,
    population: Vec<u64>,
    cases: Array2<u64>,
    covariates: Array3<f64>,
    covariate_names: Vec<String>,
}

impl RegionPanel {
    pub fn new(
        codes: Vec<String>,
        population: Vec<u64>,
        cases: Array2<u64>,
        covariates: Array3<f64>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let (n, t) = cases.dim();
        if n == 0 || t == 0 {
            return Err(Error::data("panel needs at least one region and one day"));
        }
        if codes.len() != n || population.len() != n {
            return Err(Error::data(format!(
                "panel has {n} case rows but {} region codes and {} populations",
                codes.len(),
                population.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for c in &codes {
            if !seen.insert(c.as_str()) {
                return Err(Error::data(format!("duplicate region code {c}")));
            }
        }
        if let Some(i) = population.iter().position(|&q| q == 0) {
            return Err(Error::data(format!("region {} has zero population", codes[i])));
        }
        let (cn, ct, cp) = covariates.dim();
        if cn != n || ct != t || cp != covariate_names.len() {
            return Err(Error::data(format!(
                "covariate tensor is {cn}x{ct}x{cp}, expected {n}x{t}x{}",
                covariate_names.len()
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("covariates contain missing or non-finite values"));
        }
        Ok(Self {
            codes,
            population,
            cases,
            covariates,
            covariate_names,
        })
    }

    pub fn n_regions(&self) -> usize {
        self.cases.nrows()
    }

    pub fn n_days(&self) -> usize {
        self.cases.ncols()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn region_by_code(&self, code: &str) -> Option<RegionId> {
        self.codes.iter().position(|c| c == code).map(RegionId)
    }

    pub fn population(&self) -> &[u64] {
        &self.population
    }

    pub fn cases(&self) -> &Array2<u64> {
        &self.cases
    }

    #[inline]
    pub fn case(&self, region: usize, day: usize) -> u64 {
        self.cases[[region, day]]
    }

    pub fn covariates(&self) -> &Array3<f64> {
        &self.covariates
    }

    /// Covariate vector of one region-day (zero-based day).
    #[inline]
    pub fn covariates_at(&self, region: usize, day: usize) -> ArrayView1<'_, f64> {
        self.covariates.slice(s![region, day, ..])
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn total_cases(&self) -> u64 {
        self.cases.sum()
    }

    /// Copy of the panel restricted to the named covariates, in the given order.
    pub fn select_covariates<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            let name = name.as_ref();
            let j = self
                .covariate_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Config(format!("unknown covariate {name}")))?;
            idx.push(j);
        }
        let covariates = self.covariates.select(Axis(2), &idx);
        let names = idx.iter().map(|&j| self.covariate_names[j].clone()).collect();
        Self::new(
            self.codes.clone(),
            self.population.clone(),
            self.cases.clone(),
            covariates,
            names,
        )
    }

    /// Copy of the panel with extra covariate columns appended.
    pub fn with_extra_covariates(&self, extra: &Array3<f64>, names: &[String]) -> Result<Self> {
        let covariates = ndarray::concatenate(Axis(2), &[self.covariates.view(), extra.view()])
            .map_err(|e| Error::data(format!("covariate shapes do not align: {e}")))?;
        let mut all = self.covariate_names.clone();
        all.extend(names.iter().cloned());
        Self::new(
            self.codes.clone(),
            self.population.clone(),
            self.cases.clone(),
            covariates,
            all,
        )
    }

    /// Copy of the panel keeping only days `0..days`.
    pub fn truncate_days(&self, days: usize) -> Result<Self> {
        if days == 0 || days > self.n_days() {
            return Err(Error::Parameter(format!(
                "cannot truncate a {}-day panel to {days} days",
                self.n_days()
            )));
        }
        Self::new(
            self.codes.clone(),
            self.population.clone(),
            self.cases.slice(s![.., ..days]).to_owned(),
            self.covariates.slice(s![.., ..days, ..]).to_owned(),
            self.covariate_names.clone(),
        )
    }
}

/// Daily origin-destination trips (`T x N x N`, `od[t][from][to]`) and
/// within-region trips by category (`N x T x z`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityTensor {
    od: Array3<f64>,
    within: Array3<f64>,
    within_categories: Vec<String>,
}

impl MobilityTensor {
    pub fn new(od: Array3<f64>, within: Array3<f64>, within_categories: Vec<String>) -> Result<Self> {
        let (_, a, b) = od.dim();
        if a != b {
            return Err(Error::data(format!("OD slices must be square, got {a}x{b}")));
        }
        if within.dim().2 != within_categories.len() {
            return Err(Error::data("within-region trip categories do not match tensor"));
        }
        if od.iter().chain(within.iter()).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::data("trip counts must be finite and non-negative"));
        }
        Ok(Self {
            od,
            within,
            within_categories,
        })
    }

    /// OD-only tensor with no within-region categories.
    pub fn from_od(od: Array3<f64>) -> Result<Self> {
        let (t, n, _) = od.dim();
        Self::new(od, Array3::zeros((n, t, 0)), Vec::new())
    }

    pub fn n_days(&self) -> usize {
        self.od.dim().0
    }

    pub fn n_regions(&self) -> usize {
        self.od.dim().1
    }

    pub fn od(&self) -> &Array3<f64> {
        &self.od
    }

    /// Trips from `from` to `to` on zero-based `day`.
    #[inline]
    pub fn trips(&self, day: usize, from: usize, to: usize) -> f64 {
        self.od[[day, from, to]]
    }

    pub fn within(&self) -> &Array3<f64> {
        &self.within
    }

    pub fn within_categories(&self) -> &[String] {
        &self.within_categories
    }

    /// Checks that the tensor covers the panel's days and regions.
    pub fn check_against(&self, panel: &RegionPanel) -> Result<()> {
        if self.n_regions() != panel.n_regions() {
            return Err(Error::data(format!(
                "mobility covers {} regions, panel has {}",
                self.n_regions(),
                panel.n_regions()
            )));
        }
        if self.n_days() < panel.n_days() {
            return Err(Error::data(format!(
                "missing OD day: mobility covers {} days, panel has {}",
                self.n_days(),
                panel.n_days()
            )));
        }
        Ok(())
    }
}
