//! The `mmhm` command-line tool.
//!
//! Every subcommand loads inputs, calls the library, and writes CSV or JSON
//! into `--out`. Exit codes: 0 success, 64 usage, 1 data, 2 estimation,
//! 3 internal.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::{
    self, load_bundle, BundlePaths, CovariateSet, DatasetBundle, LoadOptions, WithinCovariates,
};
use crate::domain::{discretize_gamma, Kernel, DEFAULT_TRUNCATION, INCUBATION_SCALE, INCUBATION_SHAPE};
use crate::error::{Error, ErrorCategory, Result};
use crate::estimate::{fit_spec, loro_cv, tune, BackgroundGrid, CvConfig, FitSpec, FittedMmhm, Grid};
use crate::eval::{score, wilcoxon_signed_rank, ScoreCell, ScoreReport};
use crate::forecast::{forecast, CovariatePolicy, ForecastConfig};
use crate::process::compute_correction;
use crate::simulate::{simulate_panel, ScenarioSpec};

pub const EXIT_USAGE: u8 = 64;

impl ErrorCategory {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorCategory::Usage => EXIT_USAGE,
            ErrorCategory::Data => 1,
            ErrorCategory::Estimation => 2,
            ErrorCategory::Internal => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mmhm", version, about = "Mobility-marked Hawkes model for regional epidemic forecasting")]
pub struct Cli {
    /// Worker threads for grid search, CV folds and replicates (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// key=value file; explicit flags take precedence over its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write model.json and fit_report.txt.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search over alpha and xi by leave-one-region-out RMSE; writes tune.csv.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated alpha values (default 0, 0.25, ..., 3).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        alphas: Option<Vec<f64>>,
        /// Comma-separated xi values (default 0, 2, ..., 20).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        xis: Option<Vec<f64>>,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-region-out cross-validation; writes scores.csv.
    Cv {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample forecasts past the end of the data; writes forecast.csv and band.csv.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic bundle; writes the five CSV files and truth.json.
    Simulate {
        /// Scenario JSON; omit to use the built-in desk-scale scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the scenario's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score band.csv means against observed cases; writes scores.csv.
    Evaluate {
        #[arg(long)]
        band: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Wilcoxon signed-rank test on per-cell RMSE of two scores.csv files.
    Compare {
        a: PathBuf,
        b: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding the bundle CSV files.
    #[arg(long)]
    pub data: PathBuf,
    /// Drop the temperature covariate.
    #[arg(long)]
    pub no_weather: bool,
    /// Add incoming-trip index as a covariate.
    #[arg(long)]
    pub with_between_covariates: bool,
    /// Add population, density and city share as covariates.
    #[arg(long)]
    pub with_demographics: bool,
    /// Use total within-region trips instead of one index per category.
    #[arg(long)]
    pub aggregate_within: bool,
}

impl DataArgs {
    fn covariates(&self, weather_available: bool) -> CovariateSet {
        CovariateSet {
            within: if self.aggregate_within {
                WithinCovariates::Aggregate
            } else {
                WithinCovariates::PerCategory
            },
            weather: !self.no_weather && weather_available,
            between: self.with_between_covariates,
            demographics: self.with_demographics,
        }
    }

    fn load(&self) -> Result<DatasetBundle> {
        let paths = BundlePaths::from_dir(&self.data);
        let options = LoadOptions {
            reference_window: None,
            covariates: self.covariates(paths.weather.is_some()),
        };
        load_bundle(&paths, &options)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Travel weight (default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Lasso penalty (default 0).
    #[arg(long, allow_negative_numbers = true)]
    pub xi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kernel_shape: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub kernel_scale: Option<f64>,
    /// Kernel truncation in days.
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Force xi = 0.
    #[arg(long)]
    pub no_regularization: bool,
    /// Replace the travel correction by a constant background rate.
    #[arg(long)]
    pub no_correction: bool,
    /// Naive Hawkes baseline: background rate, xi = 0, within mobility plus demographics.
    #[arg(long)]
    pub baseline: bool,
    /// Keep late days in the M-step, dividing by the observed kernel mass.
    #[arg(long)]
    pub tail_correction: bool,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Days between forecast origins.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Observed days at the first origin.
    #[arg(long)]
    pub first_origin: Option<usize>,
}

/// Entries of a `--config` file.
#[derive(Debug, Default)]
struct Overlay(BTreeMap<String, String>);

const OVERLAY_KEYS: [&str; 14] = [
    "alpha",
    "xi",
    "kernel_shape",
    "kernel_scale",
    "trunc",
    "max_iter",
    "tol",
    "horizon",
    "replicates",
    "seed",
    "stride",
    "first_origin",
    "alphas",
    "xis",
];

impl Overlay {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {}: expected key=value, got {raw:?}", k + 1))
            })?;
            let key = key.trim().replace('-', "_");
            if !OVERLAY_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("config line {}: unknown key {key:?}", k + 1)));
            }
            map.insert(key, value.trim().to_string());
        }
        Ok(Self(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("config value for {key} is invalid: {v:?}"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| Error::Config(format!("config value for {key} is invalid: {v:?}"))),
        }
    }

    fn pick<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }
}

/// Resolved model settings.
struct ModelSettings {
    kernel: Kernel,
    spec: FitSpec,
    variant: &'static str,
}

impl ModelArgs {
    fn resolve(&self, overlay: &Overlay) -> Result<ModelSettings> {
        let alpha = overlay.pick(self.alpha, "alpha")?.unwrap_or(1.0);
        let mut xi = overlay.pick(self.xi, "xi")?.unwrap_or(0.0);
        let shape = overlay.pick(self.kernel_shape, "kernel_shape")?.unwrap_or(INCUBATION_SHAPE);
        let scale = overlay.pick(self.kernel_scale, "kernel_scale")?.unwrap_or(INCUBATION_SCALE);
        let trunc = overlay.pick(self.trunc, "trunc")?.unwrap_or(DEFAULT_TRUNCATION);
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("--alpha must be >= 0, got {alpha}")));
        }
        if !(xi >= 0.0 && xi.is_finite()) {
            return Err(Error::Parameter(format!("--xi must be >= 0, got {xi}")));
        }
        if self.no_regularization || self.baseline {
            xi = 0.0;
        }
        let kernel = discretize_gamma(shape, scale, trunc, true)?;
        let (mut spec, variant) = if self.baseline {
            (FitSpec::background(BackgroundGrid::default(), 0.0), "naive_baseline")
        } else if self.no_correction {
            (FitSpec::background(BackgroundGrid::default(), xi), "no_correction")
        } else {
            (FitSpec::travel(alpha, xi), "full")
        };
        spec.tail_correction = self.tail_correction;
        if let Some(m) = overlay.pick(self.max_iter, "max_iter")? {
            if m < 1 {
                return Err(Error::Parameter("--max-iter must be at least 1".into()));
            }
            spec.max_iter = m;
        }
        if let Some(t) = overlay.pick(self.tol, "tol")? {
            if !(t > 0.0) {
                return Err(Error::Parameter(format!("--tol must be > 0, got {t}")));
            }
            spec.tol = t;
        }
        Ok(ModelSettings { kernel, spec, variant })
    }
}

impl CvArgs {
    fn resolve(&self, overlay: &Overlay) -> Result<CvConfig> {
        let d = CvConfig::default();
        let cv = CvConfig {
            horizon: overlay.pick(self.horizon, "horizon")?.unwrap_or(d.horizon),
            first_origin: overlay.pick(self.first_origin, "first_origin")?,
            stride: overlay.pick(self.stride, "stride")?.unwrap_or(d.stride),
            replicates: overlay.pick(self.replicates, "replicates")?.unwrap_or(d.replicates),
            seed: overlay.pick(self.seed, "seed")?.unwrap_or(d.seed),
        };
        if cv.horizon < 1 || cv.stride < 1 || cv.replicates < 1 {
            return Err(Error::Parameter("--horizon, --stride and --replicates must be at least 1".into()));
        }
        Ok(cv)
    }
}

/// Loads the bundle with the covariates a model variant needs.
fn load_for(data: &DataArgs, model: &ModelArgs) -> Result<DatasetBundle> {
    let mut bundle = data.load()?;
    if model.baseline {
        let set = CovariateSet {
            within: bundle.covariate_set.within,
            weather: false,
            between: false,
            demographics: true,
        };
        bundle.panel = bundle.build_panel(&set)?;
        bundle.covariate_set = set;
    }
    Ok(bundle)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fit_report(model: &FittedMmhm) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "variant      {}", model.metadata.get("variant").map_or("full", String::as_str));
    let _ = writeln!(s, "import       {:?}", model.import);
    let _ = writeln!(s, "xi           {}", model.xi);
    let _ = writeln!(s, "iterations   {}", model.iterations);
    let _ = writeln!(s, "converged    {}", model.converged);
    let _ = writeln!(s, "final_change {:e}", model.final_change);
    let _ = writeln!(s, "fit_rows     {}", model.fit_rows);
    let _ = writeln!(s, "attribution  {:e}", model.attribution_residual);
    let (b0, raw) = model.mark.raw_coefficients();
    let _ = writeln!(s, "\n{:<28} {:>14} {:>14}", "coefficient", "standardized", "raw");
    let _ = writeln!(s, "{:<28} {:>14.6} {:>14.6}", "(intercept)", model.mark.beta0, b0);
    for (k, name) in model.mark.covariate_names.iter().enumerate() {
        let _ = writeln!(s, "{:<28} {:>14.6} {:>14.6}", name, model.mark.theta[k], raw[k]);
    }
    s
}

fn cmd_fit(data: &DataArgs, model: &ModelArgs, out: &Path, overlay: &Overlay) -> Result<()> {
    let settings = model.resolve(overlay)?;
    let bundle = load_for(data, model)?;
    let correction = compute_correction(&bundle.panel, &bundle.mobility)?;
    let mut fitted = fit_spec(&bundle.panel, &correction, &settings.kernel, &settings.spec, None)?;
    fitted.metadata.insert("variant".into(), settings.variant.into());
    if settings.variant != "full" {
        fitted.metadata.insert("alpha_path".into(), "disabled".into());
    }
    fitted
        .metadata
        .insert("covariate_set".into(), serde_json::to_string(&bundle.covariate_set)?);
    ensure_dir(out)?;
    data::save_model(&fitted, out.join("model.json"))?;
    let report = fit_report(&fitted);
    write_text(&out.join("fit_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_tune(
    data: &DataArgs,
    model: &ModelArgs,
    alphas: Option<Vec<f64>>,
    xis: Option<Vec<f64>>,
    cv: &CvArgs,
    out: &Path,
    overlay: &Overlay,
) -> Result<()> {
    if model.no_correction || model.baseline {
        return Err(Error::Config("tune searches alpha and needs the travel correction".into()));
    }
    let settings = model.resolve(overlay)?;
    let cv = cv.resolve(overlay)?;
    let default = Grid::default();
    let mut grid = Grid {
        alphas: alphas.or(overlay.list("alphas")?).unwrap_or(default.alphas),
        xis: xis.or(overlay.list("xis")?).unwrap_or(default.xis),
    };
    if model.no_regularization {
        grid.xis = vec![0.0];
    }
    if grid.alphas.iter().chain(&grid.xis).any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::Parameter("grid values must be finite and >= 0".into()));
    }
    let bundle = load_for(data, model)?;
    let result = tune(&bundle.panel, &bundle.mobility, &settings.kernel, &grid, &settings.spec, &cv)?;
    ensure_dir(out)?;
    data::write_tune_csv(out.join("tune.csv"), &result)?;
    let best = result.best();
    println!("best alpha {} xi {} cv_rmse {}", best.alpha, best.xi, best.cv_rmse);
    Ok(())
}

fn cmd_cv(data: &DataArgs, model: &ModelArgs, cv: &CvArgs, out: &Path, overlay: &Overlay) -> Result<()> {
    let settings = model.resolve(overlay)?;
    let cv = cv.resolve(overlay)?;
    let bundle = load_for(data, model)?;
    let result = loro_cv(&bundle.panel, &bundle.mobility, &settings.kernel, &settings.spec, &cv)?;
    ensure_dir(out)?;
    data::write_scores_csv(out.join("scores.csv"), &result.report)?;
    println!("{}", result.report);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_forecast(
    model_path: &Path,
    data: &DataArgs,
    horizon: Option<usize>,
    replicates: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    overlay: &Overlay,
) -> Result<()> {
    let defaults = ForecastConfig::default();
    let config = ForecastConfig {
        horizon: overlay.pick(horizon, "horizon")?.unwrap_or(defaults.horizon),
        replicates: overlay.pick(replicates, "replicates")?.unwrap_or(defaults.replicates),
        seed: overlay.pick(seed, "seed")?.unwrap_or(defaults.seed),
        covariate_policy: CovariatePolicy::HoldLast,
    };
    config.validate()?;
    let model = data::load_model(model_path)?;
    let mut bundle = data.load()?;
    if let Some(set) = model.metadata.get("covariate_set") {
        let set: CovariateSet = serde_json::from_str(set)
            .map_err(|e| Error::data_at(model_path, None, format!("bad covariate_set metadata: {e}")))?;
        bundle.panel = bundle.build_panel(&set)?;
    }
    let result = forecast(&model, &bundle.panel, &bundle.mobility, &config)?;
    let start = bundle.date_of(bundle.n_days());
    let codes = bundle.codes();
    ensure_dir(out)?;
    data::write_forecast_csv(out.join("forecast.csv"), &result, &codes, start)?;
    data::write_band_csv(out.join("band.csv"), &result, &codes, start)?;
    println!(
        "{} replicates x {} regions x {} days from {start}",
        result.replicates(),
        codes.len(),
        result.horizon()
    );
    Ok(())
}

fn cmd_simulate(scenario: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut spec: ScenarioSpec = match scenario {
        Some(p) => data::read_json(p)?,
        None => ScenarioSpec::desk_scale(0),
    };
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let sim = simulate_panel(&spec)?;
    data::save_bundle(&sim.bundle, out)?;
    data::write_json(&out.join("truth.json"), &sim.truth)?;
    data::write_json(&out.join("scenario.json"), &spec)?;
    println!(
        "{} regions x {} days, {} cases",
        sim.bundle.n_regions(),
        sim.bundle.n_days(),
        sim.truth.total_cases
    );
    Ok(())
}

/// Reads `band.csv` means, keyed by region code, in date order.
fn read_band(path: &Path) -> Result<Vec<(String, chrono::NaiveDate, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data_at(path, None, e.to_string()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::data_at(path, None, e.to_string()))?;
        let line = rec.position().map(|p| p.line());
        let bad = |what: &str| Error::data_at(path, line, format!("cannot parse {what}"));
        let date = chrono::NaiveDate::parse_from_str(rec.get(1).unwrap_or(""), "%Y-%m-%d").map_err(|_| bad("date"))?;
        let mean: f64 = rec.get(2).unwrap_or("").parse().map_err(|_| bad("mean"))?;
        rows.push((rec.get(0).unwrap_or("").to_string(), date, mean));
    }
    Ok(rows)
}

fn cmd_evaluate(band: &Path, data: &DataArgs, out: &Path) -> Result<()> {
    let bundle = data.load()?;
    let rows = read_band(band)?;
    let first = rows
        .iter()
        .map(|r| r.1)
        .min()
        .ok_or_else(|| Error::data_at(band, None, "no forecast rows"))?;
    let mut cells = Vec::new();
    for (code, date, mean) in rows {
        let region = bundle
            .panel
            .region_by_code(&code)
            .ok_or_else(|| Error::data_at(band, None, format!("unknown region code {code:?}")))?;
        let offset = (date - bundle.date_origin).num_days();
        if offset < 0 || offset >= bundle.n_days() as i64 {
            return Err(Error::data_at(band, None, format!("no observed cases for {code} on {date}")));
        }
        let actual = bundle.panel.case(region.0, offset as usize) as f64;
        let (rmse, mae) = score(&[actual], &[mean])?;
        cells.push(ScoreCell {
            region: code,
            horizon: (date - first).num_days() as usize + 1,
            rmse,
            mae,
        });
    }
    let report = ScoreReport::from_cells(cells)?;
    ensure_dir(out)?;
    data::write_scores_csv(out.join("scores.csv"), &report)?;
    println!("{report}");
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path) -> Result<()> {
    let ra = data::read_scores_csv(a)?;
    let rb = data::read_scores_csv(b)?;
    let mut xa = Vec::new();
    let mut xb = Vec::new();
    for c in &ra.per_region {
        if let Some(d) = rb.per_region.iter().find(|d| d.region == c.region && d.horizon == c.horizon) {
            xa.push(c.rmse);
            xb.push(d.rmse);
        }
    }
    let w = wilcoxon_signed_rank(&xa, &xb)?;
    println!("pairs      {}", xa.len());
    println!("macro_rmse {} vs {}", ra.macro_rmse, rb.macro_rmse);
    println!("W+         {}", w.w_plus);
    println!("W-         {}", w.w_minus);
    println!("statistic  {}", w.statistic);
    println!("p_value    {}", w.p_value);
    println!("method     {}", if w.exact { "exact" } else { "normal" });
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let overlay = match &cli.config {
        Some(p) => Overlay::read(p)?,
        None => Overlay::default(),
    };
    if cli.jobs == Some(0) {
        return Err(Error::Parameter("--jobs must be at least 1".into()));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cli.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?
    };
    pool.install(|| match &cli.command {
        Command::Fit { data, model, out } => cmd_fit(data, model, out, &overlay),
        Command::Tune {
            data,
            model,
            alphas,
            xis,
            cv,
            out,
        } => cmd_tune(data, model, alphas.clone(), xis.clone(), cv, out, &overlay),
        Command::Cv { data, model, cv, out } => cmd_cv(data, model, cv, out, &overlay),
        Command::Forecast {
            model,
            data,
            horizon,
            replicates,
            seed,
            out,
        } => cmd_forecast(model, data, *horizon, *replicates, *seed, out, &overlay),
        Command::Simulate { scenario, seed, out } => cmd_simulate(scenario.as_deref(), *seed, out),
        Command::Evaluate { band, data, out } => cmd_evaluate(band, data, out),
        Command::Compare { a, b } => cmd_compare(a, b),
    })
}

/// Parses `args` (including the program name), runs the command, and
/// returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()))
}
