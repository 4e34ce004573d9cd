//! Plot-ready CSV outputs.

use std::path::Path;

use chrono::NaiveDate;

use super::csv_io::write_rows;
use crate::error::{Error, Result};
use crate::estimate::TuneResult;
use crate::eval::{ScoreCell, ScoreReport};
use crate::forecast::ForecastResult;

const MACRO_ROW: &str = "macro";

fn day(start: NaiveDate, offset: usize) -> String {
    (start + chrono::Days::new(offset as u64)).format("%Y-%m-%d").to_string()
}

/// One row per replicate, region and forecast day. `start` is the date of
/// the first forecast day.
pub fn write_forecast_csv(path: impl AsRef<Path>, result: &ForecastResult, codes: &[String], start: NaiveDate) -> Result<()> {
    let (reps, n, h) = result.draws.dim();
    let mut rows = Vec::with_capacity(reps * n * h);
    for r in 0..reps {
        for (i, code) in codes.iter().enumerate().take(n) {
            for d in 0..h {
                rows.push([
                    (r + 1).to_string(),
                    code.clone(),
                    day(start, d),
                    result.draws[[r, i, d]].to_string(),
                ]);
            }
        }
    }
    write_rows(
        path.as_ref(),
        &["replicate", "region_code", "date", "predicted_cases"],
        rows,
    )
}

/// Mean and 10%/90% quantiles across replicates.
pub fn write_band_csv(path: impl AsRef<Path>, result: &ForecastResult, codes: &[String], start: NaiveDate) -> Result<()> {
    let q10 = result.quantile(0.1);
    let q90 = result.quantile(0.9);
    let (n, h) = result.point.dim();
    let mut rows = Vec::with_capacity(n * h);
    for (i, code) in codes.iter().enumerate().take(n) {
        for d in 0..h {
            rows.push([
                code.clone(),
                day(start, d),
                result.point[[i, d]].to_string(),
                q10[[i, d]].to_string(),
                q90[[i, d]].to_string(),
            ]);
        }
    }
    write_rows(path.as_ref(), &["region_code", "date", "mean", "q10", "q90"], rows)
}

pub fn write_tune_csv(path: impl AsRef<Path>, result: &TuneResult) -> Result<()> {
    write_rows(
        path.as_ref(),
        &["alpha", "xi", "cv_rmse"],
        result
            .grid
            .iter()
            .map(|c| [c.alpha.to_string(), c.xi.to_string(), c.cv_rmse.to_string()]),
    )
}

/// Per-cell scores followed by a `macro` row.
pub fn write_scores_csv(path: impl AsRef<Path>, report: &ScoreReport) -> Result<()> {
    let mut rows: Vec<[String; 4]> = report
        .per_region
        .iter()
        .map(|c| [c.region.clone(), c.horizon.to_string(), c.rmse.to_string(), c.mae.to_string()])
        .collect();
    rows.push([
        MACRO_ROW.into(),
        "all".into(),
        report.macro_rmse.to_string(),
        report.macro_mae.to_string(),
    ]);
    write_rows(path.as_ref(), &["region", "horizon", "rmse", "mae"], rows)
}

/// Reads a file written by [`write_scores_csv`]; macro values are
/// recomputed from the cells.
pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<ScoreReport> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| super::csv_io::csv_err(path, e))?;
    let mut cells = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| super::csv_io::csv_err(path, e))?;
        let line = rec.position().map(|p| p.line());
        if rec.get(0) == Some(MACRO_ROW) {
            continue;
        }
        let field = |k: usize| rec.get(k).unwrap_or("").trim();
        let bad = |what: &str| Error::data_at(path, line, format!("cannot parse {what}"));
        cells.push(ScoreCell {
            region: field(0).to_string(),
            horizon: field(1).parse().map_err(|_| bad("horizon"))?,
            rmse: field(2).parse().map_err(|_| bad("rmse"))?,
            mae: field(3).parse().map_err(|_| bad("mae"))?,
        });
    }
    ScoreReport::from_cells(cells).map_err(|_| Error::data_at(path, None, "no score rows"))
}
