//! Datasets: CSV ingestion and export, covariate construction, JSON
//! documents.
//!
//! A bundle is a directory of five CSV files with fixed names and headers:
//!
//! | file                  | header                                   |
//! |-----------------------|------------------------------------------|
//! | `cases.csv`           | `date,region,new_cases`                  |
//! | `mobility_within.csv` | `date,region,mode,purpose,trips`         |
//! | `mobility_od.csv`     | `date,origin,destination,trips`          |
//! | `weather.csv`         | `date,region,tmax_c`                     |
//! | `regions.csv`         | `region,name,population,density,city_pct`|
//!
//! Dates are ISO-8601 and must be contiguous. Mobility covariates are
//! ratios of daily trips to the mean over a reference window, so 1.0 means
//! no change.

mod covariates;
mod csv_io;
mod export;
mod json;

pub use covariates::{build_between_covariates, build_within_mobility_covariates};
pub use csv_io::{load_bundle, save_bundle, BundlePaths, LoadOptions};
pub use export::{
    read_scores_csv, write_band_csv, write_forecast_csv, write_scores_csv,
    write_tune_csv,
};
pub use json::{load_model, save_model, ModelDocument, MODEL_FORMAT, MODEL_VERSION};
pub(crate) use json::{read_json, write_json};

use chrono::NaiveDate;
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::domain::{MobilityTensor, RegionPanel};
use crate::error::{Error, Result};
use crate::eval::Demographics;

pub const CASES_FILE: &str = "cases.csv";
pub const WITHIN_FILE: &str = "mobility_within.csv";
pub const OD_FILE: &str = "mobility_od.csv";
pub const WEATHER_FILE: &str = "weather.csv";
pub const REGIONS_FILE: &str = "regions.csv";

/// Default reference window length, in days from the start of the data.
pub const DEFAULT_REFERENCE_DAYS: usize = 14;

pub const WEATHER_COVARIATE: &str = "tmax_c";
pub const BETWEEN_COVARIATE: &str = "between_incoming";
pub const WITHIN_TOTAL_COVARIATE: &str = "within_total";
pub const DEMOGRAPHIC_COVARIATES: [&str; 3] = ["population", "density", "city_pct"];

/// One row of `regions.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub code: String,
    pub name: String,
    pub population: u64,
    pub density: f64,
    pub city_pct: f64,
}

/// Inclusive date range used as the mobility baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// How within-region trip categories become covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithinCovariates {
    /// One ratio per (mode, purpose) category.
    #[default]
    PerCategory,
    /// One ratio of total trips.
    Aggregate,
    Omit,
}

/// Which covariate families enter the mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSet {
    pub within: WithinCovariates,
    pub weather: bool,
    pub between: bool,
    pub demographics: bool,
}

impl Default for CovariateSet {
    fn default() -> Self {
        Self {
            within: WithinCovariates::PerCategory,
            weather: true,
            between: false,
            demographics: false,
        }
    }
}

/// Covariate name of a within-region trip category.
pub fn within_covariate_name(category: &str) -> String {
    format!("within_{}", category.replace('/', "_"))
}

/// Category label stored in [`MobilityTensor::within_categories`].
pub fn category_label(mode: &str, purpose: &str) -> String {
    format!("{mode}/{purpose}")
}

/// A validated dataset: cases, mobility, weather and region metadata on one
/// contiguous daily grid, plus the panel built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub regions: Vec<RegionInfo>,
    /// Calendar date of day 1.
    pub date_origin: NaiveDate,
    pub cases: Array2<u64>,
    pub mobility: MobilityTensor,
    /// Daily maximum temperature, `N x T`.
    pub weather: Option<Array2<f64>>,
    pub reference_window: ReferenceWindow,
    pub covariate_set: CovariateSet,
    pub panel: RegionPanel,
}

impl DatasetBundle {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        regions: Vec<RegionInfo>,
        date_origin: NaiveDate,
        cases: Array2<u64>,
        mobility: MobilityTensor,
        weather: Option<Array2<f64>>,
        reference_window: Option<ReferenceWindow>,
        covariate_set: CovariateSet,
    ) -> Result<Self> {
        let (n, t) = cases.dim();
        if regions.len() != n {
            return Err(Error::data(format!("{} regions but {n} case rows", regions.len())));
        }
        if mobility.n_regions() != n || mobility.n_days() != t || mobility.within().dim().0 != n {
            return Err(Error::data("mobility does not cover the case grid"));
        }
        if let Some(w) = &weather {
            if w.dim() != (n, t) {
                return Err(Error::data("weather does not cover the case grid"));
            }
        }
        let reference_window = reference_window.unwrap_or_else(|| ReferenceWindow {
            start: date_origin,
            end: date_origin + chrono::Days::new(DEFAULT_REFERENCE_DAYS.min(t) as u64 - 1),
        });
        let placeholder = RegionPanel::new(
            regions.iter().map(|r| r.code.clone()).collect(),
            regions.iter().map(|r| r.population).collect(),
            cases.clone(),
            Array3::zeros((n, t, 0)),
            vec![],
        )?;
        let mut bundle = Self {
            regions,
            date_origin,
            cases,
            mobility,
            weather,
            reference_window,
            covariate_set,
            panel: placeholder,
        };
        bundle.panel = bundle.build_panel(&covariate_set)?;
        Ok(bundle)
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn n_days(&self) -> usize {
        self.cases.ncols()
    }

    /// Calendar date of a zero-based day offset (may lie past the data).
    pub fn date_of(&self, offset: usize) -> NaiveDate {
        self.date_origin + chrono::Days::new(offset as u64)
    }

    pub fn codes(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.code.clone()).collect()
    }

    /// Zero-based day range of the reference window.
    pub fn reference_days(&self) -> Result<std::ops::Range<usize>> {
        let w = self.reference_window;
        let start = (w.start - self.date_origin).num_days();
        let end = (w.end - self.date_origin).num_days();
        if start < 0 || end < start || end >= self.n_days() as i64 {
            return Err(Error::data(format!(
                "reference window {}..{} is not inside the data ({} days from {})",
                w.start,
                w.end,
                self.n_days(),
                self.date_origin
            )));
        }
        Ok(start as usize..end as usize + 1)
    }

    /// Region-level demographic covariates.
    pub fn demographics(&self) -> Demographics {
        let values = Array2::from_shape_fn((self.n_regions(), 3), |(i, j)| match j {
            0 => self.regions[i].population as f64,
            1 => self.regions[i].density,
            _ => self.regions[i].city_pct,
        });
        Demographics {
            names: DEMOGRAPHIC_COVARIATES.iter().map(|s| s.to_string()).collect(),
            values,
        }
    }

    /// Builds the panel for a covariate selection.
    pub fn build_panel(&self, set: &CovariateSet) -> Result<RegionPanel> {
        let (n, t) = (self.n_regions(), self.n_days());
        let reference = self.reference_days()?;
        let mut blocks: Vec<Array3<f64>> = Vec::new();
        let mut names: Vec<String> = Vec::new();

        match set.within {
            WithinCovariates::PerCategory => {
                blocks.push(build_within_mobility_covariates(self.mobility.within(), reference.clone())?);
                names.extend(self.mobility.within_categories().iter().map(|c| within_covariate_name(c)));
            }
            WithinCovariates::Aggregate => {
                let total = self.mobility.within().sum_axis(Axis(2)).insert_axis(Axis(2));
                blocks.push(build_within_mobility_covariates(&total, reference.clone())?);
                names.push(WITHIN_TOTAL_COVARIATE.into());
            }
            WithinCovariates::Omit => {}
        }
        if set.weather {
            let w = self.weather.as_ref().ok_or_else(|| {
                Error::Config("weather covariate requested but no weather data loaded".into())
            })?;
            blocks.push(w.clone().insert_axis(Axis(2)));
            names.push(WEATHER_COVARIATE.into());
        }
        if set.between {
            let b = build_between_covariates(self.mobility.od(), reference.clone())?;
            blocks.push(b.insert_axis(Axis(2)));
            names.push(BETWEEN_COVARIATE.into());
        }
        if set.demographics {
            let d = self.demographics();
            blocks.push(Array3::from_shape_fn((n, t, 3), |(i, _, j)| d.values[[i, j]]));
            names.extend(d.names);
        }

        let covariates = if blocks.is_empty() {
            Array3::zeros((n, t, 0))
        } else {
            let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
            ndarray::concatenate(Axis(2), &views)
                .map_err(|e| Error::data(format!("covariate blocks do not align: {e}")))?
        };
        RegionPanel::new(
            self.codes(),
            self.regions.iter().map(|r| r.population).collect(),
            self.cases.clone(),
            covariates,
            names,
        )
    }
}
