//! Generative sampler for synthetic multi-region panels with known
//! parameters.
//!
//! Days are simulated in order. Each day the intensity of every region is
//! computed from the realized history, the scenario's covariates and OD
//! flows, with the same excitation and correction code the estimator uses;
//! cases are then drawn as Poisson counts on a counter-based stream keyed by
//! `(region, day)`.

use chrono::NaiveDate;
use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSet, DatasetBundle, ReferenceWindow, RegionInfo, WithinCovariates};
use crate::domain::{discretize_gamma, Kernel, MobilityTensor, DEFAULT_TRUNCATION, INCUBATION_SCALE, INCUBATION_SHAPE};
use crate::error::{Error, Result};
use crate::forecast::poisson_sample;
use crate::mark::MarkModel;
use crate::process::{correction_on_day, excitation};
use crate::rng::{stream, tag};

/// A time-varying scalar, evaluated on 1-based days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    Constant { value: f64 },
    /// `initial` until the first change; each change holds from its day on.
    PiecewiseConstant { initial: f64, changes: Vec<Change> },
    /// `mean + amplitude · sin(2π day / period + phase)`.
    Sinusoid { mean: f64, amplitude: f64, period: f64, phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub day: usize,
    pub value: f64,
}

impl Trajectory {
    pub fn constant(value: f64) -> Self {
        Trajectory::Constant { value }
    }

    /// `before` until `day − 1`, `after` from `day` on.
    pub fn step(before: f64, day: usize, after: f64) -> Self {
        Trajectory::PiecewiseConstant {
            initial: before,
            changes: vec![Change { day, value: after }],
        }
    }

    pub fn at(&self, day: usize) -> f64 {
        match self {
            Trajectory::Constant { value } => *value,
            Trajectory::PiecewiseConstant { initial, changes } => changes
                .iter()
                .filter(|c| c.day <= day)
                .max_by_key(|c| c.day)
                .map_or(*initial, |c| c.value),
            Trajectory::Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            } => mean + amplitude * (std::f64::consts::TAU * day as f64 / period + phase).sin(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match self {
            Trajectory::Constant { value } => value.is_finite(),
            Trajectory::PiecewiseConstant { initial, changes } => {
                initial.is_finite() && changes.iter().all(|c| c.value.is_finite())
            }
            Trajectory::Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            } => mean.is_finite() && amplitude.is_finite() && phase.is_finite() && *period > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid trajectory for {what}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub code: String,
    pub name: String,
    pub population: u64,
    pub density: f64,
    pub city_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: f64,
    pub scale: f64,
    pub truncation: usize,
    pub renormalize: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            shape: INCUBATION_SHAPE,
            scale: INCUBATION_SCALE,
            truncation: DEFAULT_TRUNCATION,
            renormalize: true,
        }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel> {
        discretize_gamma(self.shape, self.scale, self.truncation, self.renormalize)
    }
}

/// A within-region trip category: daily trips in region `i` are
/// `base_trips[i] · trajectories[i](day)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityCategory {
    pub mode: String,
    pub purpose: String,
    pub base_trips: Vec<f64>,
    pub trajectories: Vec<Trajectory>,
}

/// OD flows: `baseline[from][to] · multiplier(day)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdProcess {
    pub baseline: Vec<Vec<f64>>,
    pub multiplier: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub region: String,
    /// 1-based day.
    pub day: usize,
    pub cases: u64,
}

fn default_reference_days() -> usize {
    crate::data::DEFAULT_REFERENCE_DAYS
}

fn default_lambda_cap() -> f64 {
    1e6
}

/// Everything needed to draw one synthetic dataset.
///
/// `true_theta` acts on raw covariates in panel order: one mobility index
/// per category (trips relative to the reference-window mean), then
/// `tmax_c` if weather is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub regions: Vec<RegionSpec>,
    pub true_beta0: f64,
    pub true_theta: Vec<f64>,
    pub true_alpha: f64,
    #[serde(default)]
    pub kernel: KernelSpec,
    pub mobility: Vec<MobilityCategory>,
    /// Daily maximum temperature per region.
    #[serde(default)]
    pub weather: Option<Vec<Trajectory>>,
    #[serde(default = "default_reference_days")]
    pub reference_days: usize,
    pub od: OdProcess,
    pub seeds: Vec<Seed>,
    #[serde(default = "default_lambda_cap")]
    pub lambda_cap: f64,
    pub rng_seed: u64,
}

/// Ground-truth record written next to a simulated bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta0: f64,
    pub theta: Vec<f64>,
    pub covariate_names: Vec<String>,
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub rng_seed: u64,
    pub total_cases: u64,
    /// Largest intensity reached.
    pub max_intensity: f64,
}

impl Truth {
    pub fn mark(&self) -> Result<MarkModel> {
        MarkModel::from_raw(self.beta0, self.theta.clone(), self.covariate_names.clone())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub bundle: DatasetBundle,
    pub truth: Truth,
}

impl ScenarioSpec {
    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_regions();
        let bad = |m: String| Err(Error::Parameter(m));
        if n == 0 || self.n_days == 0 {
            return bad("scenario needs at least one region and one day".into());
        }
        if let Some(r) = self.regions.iter().find(|r| r.population == 0) {
            return bad(format!("region {} has zero population", r.code));
        }
        for (k, r) in self.regions.iter().enumerate() {
            if self.regions[..k].iter().any(|o| o.code == r.code) {
                return bad(format!("duplicate region code {}", r.code));
            }
        }
        let expected = self.mobility.len() + usize::from(self.weather.is_some());
        if self.true_theta.len() != expected {
            return bad(format!(
                "true_theta has {} entries, the scenario has {expected} covariates",
                self.true_theta.len()
            ));
        }
        if !self.true_beta0.is_finite() || self.true_theta.iter().any(|v| !v.is_finite()) {
            return bad("mark parameters must be finite".into());
        }
        if !(self.true_alpha >= 0.0 && self.true_alpha.is_finite()) {
            return bad(format!("true_alpha must be >= 0, got {}", self.true_alpha));
        }
        for c in &self.mobility {
            if c.base_trips.len() != n || c.trajectories.len() != n {
                return bad(format!("category {}/{} needs one entry per region", c.mode, c.purpose));
            }
            for (i, traj) in c.trajectories.iter().enumerate() {
                traj.validate(&format!("{}/{}", c.mode, c.purpose))?;
                if !(c.base_trips[i] >= 0.0) {
                    return bad("base trips must be >= 0".into());
                }
                if (1..=self.n_days).any(|d| c.base_trips[i] * traj.at(d) < 0.0) {
                    return bad(format!("category {}/{} has negative trips", c.mode, c.purpose));
                }
            }
        }
        if let Some(w) = &self.weather {
            if w.len() != n {
                return bad("weather needs one trajectory per region".into());
            }
            for traj in w {
                traj.validate("weather")?;
            }
        }
        if self.od.baseline.len() != n || self.od.baseline.iter().any(|row| row.len() != n) {
            return bad(format!("OD baseline must be {n}x{n}"));
        }
        if self.od.baseline.iter().flatten().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("OD baseline must be finite and >= 0".into());
        }
        self.od.multiplier.validate("OD multiplier")?;
        if (1..=self.n_days).any(|d| self.od.multiplier.at(d) < 0.0) {
            return bad("OD multiplier must be >= 0".into());
        }
        if self.reference_days == 0 || self.reference_days > self.n_days {
            return bad(format!("reference_days must be in 1..={}", self.n_days));
        }
        for s in &self.seeds {
            if !self.regions.iter().any(|r| r.code == s.region) {
                return bad(format!("seed names unknown region {}", s.region));
            }
            if s.day == 0 || s.day > self.n_days {
                return bad(format!("seed day {} outside 1..={}", s.day, self.n_days));
            }
        }
        if !(self.lambda_cap > 0.0) {
            return bad("lambda_cap must be > 0".into());
        }
        self.kernel.build()?;
        Ok(())
    }

    /// Covariate names in the order `true_theta` uses.
    pub fn covariate_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .mobility
            .iter()
            .map(|c| crate::data::within_covariate_name(&crate::data::category_label(&c.mode, &c.purpose)))
            .collect();
        if self.weather.is_some() {
            names.push(crate::data::WEATHER_COVARIATE.into());
        }
        names
    }

    /// Bundle with exogenous inputs filled in and zero cases.
    fn exogenous_bundle(&self) -> Result<DatasetBundle> {
        let (n, t) = (self.n_regions(), self.n_days);
        let z = self.mobility.len();
        let within = Array3::from_shape_fn((n, t, z), |(i, d, c)| {
            let cat = &self.mobility[c];
            cat.base_trips[i] * cat.trajectories[i].at(d + 1)
        });
        let od = Array3::from_shape_fn((t, n, n), |(d, a, b)| {
            self.od.baseline[a][b] * self.od.multiplier.at(d + 1)
        });
        let categories = self
            .mobility
            .iter()
            .map(|c| crate::data::category_label(&c.mode, &c.purpose))
            .collect();
        let mobility = MobilityTensor::new(od, within, categories)?;
        let weather = self
            .weather
            .as_ref()
            .map(|w| Array2::from_shape_fn((n, t), |(i, d)| w[i].at(d + 1)));
        let regions = self
            .regions
            .iter()
            .map(|r| RegionInfo {
                code: r.code.clone(),
                name: r.name.clone(),
                population: r.population,
                density: r.density,
                city_pct: r.city_pct,
            })
            .collect();
        let reference = ReferenceWindow {
            start: self.start_date,
            end: self.start_date + chrono::Days::new(self.reference_days as u64 - 1),
        };
        let set = CovariateSet {
            within: WithinCovariates::PerCategory,
            weather: self.weather.is_some(),
            between: false,
            demographics: false,
        };
        DatasetBundle::new(
            regions,
            self.start_date,
            Array2::zeros((n, t)),
            mobility,
            weather,
            Some(reference),
            set,
        )
    }

    /// Mainland-scale scenario: 26 cantons, 90 days, two mobility
    /// categories that drop in a lockdown on day 30, and a temperature
    /// series.
    pub fn desk_scale(rng_seed: u64) -> Self {
        let n_days = 90;
        let regions = swiss_cantons();
        let n = regions.len();
        let lockdown = 30;
        let commute = MobilityCategory {
            mode: "public_transport".into(),
            purpose: "work".into(),
            base_trips: regions.iter().map(|r| 0.8 * r.population as f64).collect(),
            trajectories: (0..n)
                .map(|i| Trajectory::step(1.0, lockdown, 0.45 + 0.2 * spread(i, 1)))
                .collect(),
        };
        let leisure = MobilityCategory {
            mode: "car".into(),
            purpose: "leisure".into(),
            base_trips: regions.iter().map(|r| 1.5 * r.population as f64).collect(),
            trajectories: (0..n)
                .map(|i| Trajectory::step(1.0, lockdown + 3, 0.6 + 0.25 * spread(i, 2)))
                .collect(),
        };
        let weather = (0..n)
            .map(|i| Trajectory::Sinusoid {
                mean: 11.0 + 3.0 * spread(i, 3),
                amplitude: 9.0,
                period: 365.0,
                phase: -0.6,
            })
            .collect();
        let od = gravity_od(&regions, 0.01);
        let seeds = ["TI", "GE", "ZH", "VD", "BS"]
            .iter()
            .map(|c| Seed {
                region: (*c).into(),
                day: 1,
                cases: 8,
            })
            .collect();
        Self {
            n_days,
            start_date: NaiveDate::from_ymd_opt(2020, 2, 24).expect("valid date"),
            regions,
            // R ≈ 1.6 before the lockdown, ≈ 0.95 after
            true_beta0: -0.5,
            true_theta: vec![0.6, 0.5, -0.02],
            true_alpha: 1.0,
            kernel: KernelSpec::default(),
            mobility: vec![commute, leisure],
            weather: Some(weather),
            reference_days: 14,
            od: OdProcess {
                baseline: od,
                multiplier: Trajectory::step(1.0, lockdown, 0.4),
            },
            seeds,
            lambda_cap: default_lambda_cap(),
            rng_seed,
        }
    }
}

/// Deterministic value in `[0, 1)` for per-region variety.
fn spread(i: usize, salt: u64) -> f64 {
    (crate::rng::stream_seed(salt, &[i as u64]) >> 11) as f64 / (1u64 << 53) as f64
}

/// `od[a][b] = share · pop_a · pop_b / total` for `a ≠ b`.
pub fn gravity_od(regions: &[RegionSpec], share: f64) -> Vec<Vec<f64>> {
    let total: f64 = regions.iter().map(|r| r.population as f64).sum();
    regions
        .iter()
        .enumerate()
        .map(|(a, ra)| {
            regions
                .iter()
                .enumerate()
                .map(|(b, rb)| {
                    if a == b {
                        0.0
                    } else {
                        share * ra.population as f64 * rb.population as f64 / total
                    }
                })
                .collect()
        })
        .collect()
}

/// The 26 Swiss cantons with approximate 2020 population and area.
pub fn swiss_cantons() -> Vec<RegionSpec> {
    const TABLE: [(&str, &str, u64, f64); 26] = [
        ("ZH", "Zurich", 1_539_275, 1729.0),
        ("BE", "Bern", 1_039_474, 5959.0),
        ("LU", "Lucerne", 413_120, 1493.0),
        ("UR", "Uri", 36_703, 1077.0),
        ("SZ", "Schwyz", 160_480, 908.0),
        ("OW", "Obwalden", 38_108, 491.0),
        ("NW", "Nidwalden", 43_520, 276.0),
        ("GL", "Glarus", 40_590, 685.0),
        ("ZG", "Zug", 127_642, 239.0),
        ("FR", "Fribourg", 321_783, 1671.0),
        ("SO", "Solothurn", 275_247, 791.0),
        ("BS", "Basel-Stadt", 195_844, 37.0),
        ("BL", "Basel-Landschaft", 289_468, 518.0),
        ("SH", "Schaffhausen", 82_348, 298.0),
        ("AR", "Appenzell Ausserrhoden", 55_309, 243.0),
        ("AI", "Appenzell Innerrhoden", 16_128, 173.0),
        ("SG", "St. Gallen", 510_734, 2031.0),
        ("GR", "Graubunden", 199_021, 7105.0),
        ("AG", "Aargau", 685_845, 1404.0),
        ("TG", "Thurgau", 279_547, 991.0),
        ("TI", "Ticino", 351_491, 2812.0),
        ("VD", "Vaud", 805_098, 3212.0),
        ("VS", "Valais", 345_525, 5224.0),
        ("NE", "Neuchatel", 176_496, 802.0),
        ("GE", "Geneva", 504_128, 282.0),
        ("JU", "Jura", 73_419, 839.0),
    ];
    TABLE
        .iter()
        .map(|&(code, name, population, area)| {
            let density = population as f64 / area;
            RegionSpec {
                code: code.into(),
                name: name.into(),
                population,
                density,
                city_pct: (25.0 + 12.0 * (density / 50.0).ln()).clamp(5.0, 100.0),
            }
        })
        .collect()
}

/// Draws one panel from the scenario.
pub fn simulate_panel(spec: &ScenarioSpec) -> Result<SimulationOutput> {
    spec.validate()?;
    let kernel = spec.kernel.build()?;
    let mut bundle = spec.exogenous_bundle()?;
    let names = spec.covariate_names();
    if bundle.panel.covariate_names() != names.as_slice() {
        return Err(Error::Domain("scenario covariate order does not match the panel".into()));
    }
    let mark = MarkModel::from_raw(spec.true_beta0, spec.true_theta.clone(), names.clone())?;
    let (n, t) = (spec.n_regions(), spec.n_days);

    let mut seeds = Array2::<u64>::zeros((n, t));
    for s in &spec.seeds {
        let i = spec.regions.iter().position(|r| r.code == s.region).expect("validated");
        seeds[[i, s.day - 1]] += s.cases;
    }

    let population: Vec<u64> = spec.regions.iter().map(|r| r.population).collect();
    let mut cases = Array2::<u64>::zeros((n, t));
    // source weights y + α n̂, one row per region for contiguous access
    let mut weights = vec![vec![0.0; t]; n];
    let mut day_cases = vec![0.0; n];
    let mut n_hat = vec![0.0; n];
    let mut max_intensity: f64 = 0.0;

    for d in 0..t {
        for i in 0..n {
            let lambda = mark.rate(bundle.panel.covariates_at(i, d)) * excitation(&weights[i], d, &kernel);
            if !(lambda <= spec.lambda_cap) {
                return Err(Error::Scenario(format!(
                    "intensity {lambda:.4e} in region {} on day {} exceeds the cap {:.1e}; \
                     lower the reproduction number or travel weight so the process is subcritical",
                    spec.regions[i].code,
                    d + 1,
                    spec.lambda_cap
                )));
            }
            max_intensity = max_intensity.max(lambda);
            let mut rng = stream(spec.rng_seed, &[tag::SIMULATE, i as u64, d as u64]);
            let y = poisson_sample(lambda, &mut rng)? + seeds[[i, d]];
            cases[[i, d]] = y;
            day_cases[i] = y as f64;
        }
        if spec.true_alpha > 0.0 {
            let od = bundle.mobility.od().index_axis(Axis(0), d);
            correction_on_day(od, &day_cases, &population, &mut n_hat);
        }
        for i in 0..n {
            weights[i][d] = day_cases[i] + spec.true_alpha * n_hat[i];
        }
    }

    let total_cases = cases.sum();
    bundle = DatasetBundle::new(
        bundle.regions,
        bundle.date_origin,
        cases,
        bundle.mobility,
        bundle.weather,
        Some(bundle.reference_window),
        bundle.covariate_set,
    )?;
    Ok(SimulationOutput {
        bundle,
        truth: Truth {
            beta0: spec.true_beta0,
            theta: spec.true_theta.clone(),
            covariate_names: names,
            alpha: spec.true_alpha,
            kernel: spec.kernel,
            rng_seed: spec.rng_seed,
            total_cases,
            max_intensity,
        },
    })
}
