use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use ndarray::{Array2, Array3};

use super::{
    category_label, CovariateSet, DatasetBundle, ReferenceWindow, RegionInfo, CASES_FILE, OD_FILE,
    REGIONS_FILE, WEATHER_FILE, WITHIN_FILE,
};
use crate::domain::MobilityTensor;
use crate::error::{Error, Result};

const CASES_HEADER: [&str; 3] = ["date", "region", "new_cases"];
const WITHIN_HEADER: [&str; 5] = ["date", "region", "mode", "purpose", "trips"];
const OD_HEADER: [&str; 4] = ["date", "origin", "destination", "trips"];
const WEATHER_HEADER: [&str; 3] = ["date", "region", "tmax_c"];
const REGIONS_HEADER: [&str; 5] = ["region", "name", "population", "density", "city_pct"];

/// Longest run of missing weather days that is filled by interpolation.
const MAX_WEATHER_GAP: usize = 2;

/// Locations of the bundle files. `weather` is optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundlePaths {
    pub cases: PathBuf,
    pub within: PathBuf,
    pub od: PathBuf,
    pub weather: Option<PathBuf>,
    pub regions: PathBuf,
}

impl BundlePaths {
    /// Standard file names inside `dir`; weather is used when present.
    pub fn from_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        let weather = dir.join(WEATHER_FILE);
        Self {
            cases: dir.join(CASES_FILE),
            within: dir.join(WITHIN_FILE),
            od: dir.join(OD_FILE),
            weather: weather.exists().then_some(weather),
            regions: dir.join(REGIONS_FILE),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadOptions {
    /// Defaults to the first 14 days.
    pub reference_window: Option<ReferenceWindow>,
    pub covariates: CovariateSet,
}

struct Table {
    path: PathBuf,
    reader: csv::Reader<File>,
}

struct Row {
    line: u64,
    record: csv::StringRecord,
}

impl Table {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let found = reader
            .headers()
            .map_err(|e| Error::data_at(path, Some(1), e.to_string()))?
            .clone();
        if found.iter().map(str::trim).ne(header.iter().copied()) {
            return Err(Error::data_at(
                path,
                Some(1),
                format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
            ));
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
        })
    }

    fn rows(&mut self) -> Result<Vec<Row>> {
        let mut out = Vec::new();
        for rec in self.reader.records() {
            let record = rec.map_err(|e| {
                let line = e.position().map(|p| p.line());
                Error::data_at(&self.path, line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            out.push(Row { line, record });
        }
        Ok(out)
    }

    fn err(&self, line: u64, message: impl Into<String>) -> Error {
        Error::data_at(&self.path, Some(line), message)
    }

    fn cell<'r>(&self, row: &'r Row, idx: usize, name: &str) -> Result<&'r str> {
        match row.record.get(idx).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(self.err(row.line, format!("missing value for {name}"))),
        }
    }

    fn parse<T: FromStr>(&self, row: &Row, idx: usize, name: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.cell(row, idx, name)?;
        raw.parse()
            .map_err(|e| self.err(row.line, format!("cannot parse {name} {raw:?}: {e}")))
    }

    fn date(&self, row: &Row, idx: usize) -> Result<NaiveDate> {
        let raw = self.cell(row, idx, "date")?;
        NaiveDate::parse_from_str(raw, "%Y-%m-%d")
            .map_err(|e| self.err(row.line, format!("bad date {raw:?}: {e}")))
    }

    fn count(&self, row: &Row, idx: usize, name: &str) -> Result<f64> {
        let v: f64 = self.parse(row, idx, name)?;
        if !v.is_finite() || v < 0.0 {
            return Err(self.err(row.line, format!("{name} must be a non-negative number, got {v}")));
        }
        Ok(v)
    }

    fn region(&self, row: &Row, idx: usize, name: &str, index: &HashMap<String, usize>) -> Result<usize> {
        let code = self.cell(row, idx, name)?;
        index
            .get(code)
            .copied()
            .ok_or_else(|| self.err(row.line, format!("unknown region code {code:?}")))
    }

    fn day(&self, row: &Row, date: NaiveDate, origin: NaiveDate, n_days: usize) -> Result<usize> {
        let d = (date - origin).num_days();
        if d < 0 || d >= n_days as i64 {
            return Err(self.err(
                row.line,
                format!("date {date} lies outside the case period {origin}..{}", origin + chrono::Days::new(n_days as u64 - 1)),
            ));
        }
        Ok(d as usize)
    }
}

fn read_regions(path: &Path) -> Result<Vec<RegionInfo>> {
    let mut table = Table::open(path, &REGIONS_HEADER)?;
    let mut regions: Vec<RegionInfo> = Vec::new();
    for row in table.rows()? {
        let info = RegionInfo {
            code: table.cell(&row, 0, "region")?.to_string(),
            name: table.cell(&row, 1, "name")?.to_string(),
            population: table.parse(&row, 2, "population")?,
            density: table.count(&row, 3, "density")?,
            city_pct: table.count(&row, 4, "city_pct")?,
        };
        if info.population == 0 {
            return Err(table.err(row.line, format!("region {} has zero population", info.code)));
        }
        if regions.iter().any(|r| r.code == info.code) {
            return Err(table.err(row.line, format!("duplicate region code {:?}", info.code)));
        }
        regions.push(info);
    }
    if regions.is_empty() {
        return Err(Error::data_at(path, None, "no regions listed"));
    }
    Ok(regions)
}

/// Reads the case table and fixes the date grid.
fn read_cases(path: &Path, index: &HashMap<String, usize>, codes: &[String]) -> Result<(NaiveDate, Array2<u64>)> {
    let mut table = Table::open(path, &CASES_HEADER)?;
    let rows = table.rows()?;
    let mut parsed = Vec::with_capacity(rows.len());
    for row in &rows {
        let date = table.date(row, 0)?;
        let region = table.region(row, 1, "region", index)?;
        let raw = table.cell(row, 2, "new_cases")?;
        let cases: u64 = match raw.parse::<i64>() {
            Ok(v) if v < 0 => return Err(table.err(row.line, format!("negative case count {v}"))),
            Ok(v) => v as u64,
            Err(e) => return Err(table.err(row.line, format!("cannot parse new_cases {raw:?}: {e}"))),
        };
        parsed.push((row.line, date, region, cases));
    }
    if parsed.is_empty() {
        return Err(Error::data_at(path, None, "no case rows"));
    }

    let mut dates: Vec<NaiveDate> = parsed.iter().map(|p| p.1).collect();
    dates.sort();
    dates.dedup();
    for w in dates.windows(2) {
        if (w[1] - w[0]).num_days() != 1 {
            return Err(Error::data_at(
                path,
                None,
                format!("dates are not contiguous: nothing between {} and {}", w[0], w[1]),
            ));
        }
    }
    let origin = dates[0];
    let n_days = dates.len();
    let n = codes.len();
    let mut cases = Array2::zeros((n, n_days));
    let mut seen = Array2::from_elem((n, n_days), false);
    for (line, date, region, v) in parsed {
        let d = (date - origin).num_days() as usize;
        if seen[[region, d]] {
            return Err(table.err(line, format!("duplicate row for region {} on {date}", codes[region])));
        }
        seen[[region, d]] = true;
        cases[[region, d]] = v;
    }
    first_gap(&seen, |i, d| {
        Error::data_at(
            path,
            None,
            format!("missing row for region {} on {}", codes[i], origin + chrono::Days::new(d as u64)),
        )
    })?;
    Ok((origin, cases))
}

fn first_gap(seen: &Array2<bool>, make: impl Fn(usize, usize) -> Error) -> Result<()> {
    match seen.indexed_iter().find(|(_, s)| !**s) {
        Some(((i, d), _)) => Err(make(i, d)),
        None => Ok(()),
    }
}

fn read_within(
    path: &Path,
    index: &HashMap<String, usize>,
    codes: &[String],
    origin: NaiveDate,
    n_days: usize,
) -> Result<(Array3<f64>, Vec<String>)> {
    let mut table = Table::open(path, &WITHIN_HEADER)?;
    let rows = table.rows()?;
    let mut categories: Vec<String> = Vec::new();
    let mut parsed = Vec::with_capacity(rows.len());
    for row in &rows {
        let date = table.date(row, 0)?;
        let day = table.day(row, date, origin, n_days)?;
        let region = table.region(row, 1, "region", index)?;
        let label = category_label(table.cell(row, 2, "mode")?, table.cell(row, 3, "purpose")?);
        let trips = table.count(row, 4, "trips")?;
        let c = match categories.iter().position(|c| *c == label) {
            Some(c) => c,
            None => {
                categories.push(label);
                categories.len() - 1
            }
        };
        parsed.push((row.line, day, region, c, trips));
    }
    let n = codes.len();
    let z = categories.len();
    let mut within = Array3::zeros((n, n_days, z));
    let mut seen = Array3::from_elem((n, n_days, z), false);
    for (line, d, i, c, v) in parsed {
        if seen[[i, d, c]] {
            return Err(table.err(line, format!("duplicate row for region {} category {}", codes[i], categories[c])));
        }
        seen[[i, d, c]] = true;
        within[[i, d, c]] = v;
    }
    if let Some(((i, d, c), _)) = seen.indexed_iter().find(|(_, s)| !**s) {
        return Err(Error::data_at(
            path,
            None,
            format!(
                "missing row for region {} category {} on {}",
                codes[i],
                categories[c],
                origin + chrono::Days::new(d as u64)
            ),
        ));
    }
    Ok((within, categories))
}

fn read_od(path: &Path, index: &HashMap<String, usize>, n: usize, origin: NaiveDate, n_days: usize) -> Result<Array3<f64>> {
    let mut table = Table::open(path, &OD_HEADER)?;
    let mut od = Array3::zeros((n_days, n, n));
    let mut day_seen = vec![false; n_days];
    for row in table.rows()? {
        let date = table.date(&row, 0)?;
        let day = table.day(&row, date, origin, n_days)?;
        let from = table.region(&row, 1, "origin", index)?;
        let to = table.region(&row, 2, "destination", index)?;
        // absent pairs mean no trips; repeated pairs accumulate
        od[[day, from, to]] += table.count(&row, 3, "trips")?;
        day_seen[day] = true;
    }
    if let Some(d) = day_seen.iter().position(|s| !s) {
        return Err(Error::data_at(
            path,
            None,
            format!("missing OD day {}", origin + chrono::Days::new(d as u64)),
        ));
    }
    Ok(od)
}

fn read_weather(
    path: &Path,
    index: &HashMap<String, usize>,
    codes: &[String],
    origin: NaiveDate,
    n_days: usize,
) -> Result<Array2<f64>> {
    let mut table = Table::open(path, &WEATHER_HEADER)?;
    let n = codes.len();
    let mut values: Array2<Option<f64>> = Array2::from_elem((n, n_days), None);
    for row in table.rows()? {
        let date = table.date(&row, 0)?;
        let day = table.day(&row, date, origin, n_days)?;
        let region = table.region(&row, 1, "region", index)?;
        let raw = row.record.get(2).map(str::trim).unwrap_or("");
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            continue;
        }
        let v: f64 = table.parse(&row, 2, "tmax_c")?;
        if !v.is_finite() {
            return Err(table.err(row.line, format!("tmax_c must be finite, got {v}")));
        }
        values[[region, day]] = Some(v);
    }
    let mut out = Array2::zeros((n, n_days));
    for i in 0..n {
        let series: Vec<Option<f64>> = values.row(i).to_vec();
        let filled = interpolate_gaps(&series, MAX_WEATHER_GAP).map_err(|(start, len)| {
            Error::data_at(
                path,
                None,
                format!(
                    "region {}: {len} missing weather day(s) from {} cannot be interpolated",
                    codes[i],
                    origin + chrono::Days::new(start as u64)
                ),
            )
        })?;
        out.row_mut(i).assign(&ndarray::Array1::from(filled));
    }
    Ok(out)
}

/// Fills interior runs of at most `max_gap` missing values by linear
/// interpolation. Returns the start and length of the first run that
/// cannot be filled.
pub(crate) fn interpolate_gaps(series: &[Option<f64>], max_gap: usize) -> std::result::Result<Vec<f64>, (usize, usize)> {
    let mut out = vec![0.0; series.len()];
    let mut k = 0;
    while k < series.len() {
        if let Some(v) = series[k] {
            out[k] = v;
            k += 1;
            continue;
        }
        let start = k;
        while k < series.len() && series[k].is_none() {
            k += 1;
        }
        let len = k - start;
        if start == 0 || k == series.len() || len > max_gap {
            return Err((start, len));
        }
        let (a, b) = (out[start - 1], series[k].unwrap_or_default());
        for j in 0..len {
            let w = (j + 1) as f64 / (len + 1) as f64;
            out[start + j] = a + w * (b - a);
        }
    }
    Ok(out)
}

/// Loads and validates a bundle.
pub fn load_bundle(paths: &BundlePaths, options: &LoadOptions) -> Result<DatasetBundle> {
    let regions = read_regions(&paths.regions)?;
    let codes: Vec<String> = regions.iter().map(|r| r.code.clone()).collect();
    let index: HashMap<String, usize> = codes.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();

    let (origin, cases) = read_cases(&paths.cases, &index, &codes)?;
    let n_days = cases.ncols();
    let (within, categories) = read_within(&paths.within, &index, &codes, origin, n_days)?;
    let od = read_od(&paths.od, &index, codes.len(), origin, n_days)?;
    let weather = match &paths.weather {
        Some(p) => Some(read_weather(p, &index, &codes, origin, n_days)?),
        None => None,
    };
    let mobility = MobilityTensor::new(od, within, categories)?;
    DatasetBundle::new(
        regions,
        origin,
        cases,
        mobility,
        weather,
        options.reference_window,
        options.covariates,
    )
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data_at(path, None, format!("{other:?}")),
    }
}

pub(crate) fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the bundle as the five standard files in `dir` (weather only if
/// present). Floats use the shortest representation that round-trips.
pub fn save_bundle(bundle: &DatasetBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let codes = bundle.codes();
    let (n, t) = (bundle.n_regions(), bundle.n_days());
    let date = |d: usize| bundle.date_of(d).format("%Y-%m-%d").to_string();

    write_rows(
        &dir.join(REGIONS_FILE),
        &REGIONS_HEADER,
        bundle.regions.iter().map(|r| {
            [
                r.code.clone(),
                r.name.clone(),
                r.population.to_string(),
                r.density.to_string(),
                r.city_pct.to_string(),
            ]
        }),
    )?;

    write_rows(
        &dir.join(CASES_FILE),
        &CASES_HEADER,
        (0..t).flat_map(|d| (0..n).map(move |i| (d, i))).map(|(d, i)| {
            [date(d), codes[i].clone(), bundle.cases[[i, d]].to_string()]
        }),
    )?;

    let within = bundle.mobility.within();
    let categories = bundle.mobility.within_categories();
    let mut rows = Vec::with_capacity(n * t * categories.len());
    for d in 0..t {
        for i in 0..n {
            for (c, label) in categories.iter().enumerate() {
                let (mode, purpose) = label.split_once('/').unwrap_or((label.as_str(), ""));
                rows.push([
                    date(d),
                    codes[i].clone(),
                    mode.to_string(),
                    purpose.to_string(),
                    within[[i, d, c]].to_string(),
                ]);
            }
        }
    }
    write_rows(&dir.join(WITHIN_FILE), &WITHIN_HEADER, rows)?;

    let od = bundle.mobility.od();
    let mut rows = Vec::with_capacity(n * n * t);
    for d in 0..t {
        for a in 0..n {
            for b in 0..n {
                rows.push([date(d), codes[a].clone(), codes[b].clone(), od[[d, a, b]].to_string()]);
            }
        }
    }
    write_rows(&dir.join(OD_FILE), &OD_HEADER, rows)?;

    if let Some(w) = &bundle.weather {
        write_rows(
            &dir.join(WEATHER_FILE),
            &WEATHER_HEADER,
            (0..t).flat_map(|d| (0..n).map(move |i| (d, i))).map(|(d, i)| {
                [date(d), codes[i].clone(), w[[i, d]].to_string()]
            }),
        )?;
    }
    Ok(())
}
