//! File formats: price CSV ingest, break-date lists, run configuration and
//! artifact writers.
//!
//! Artifacts carry a metadata header (package version, seed, config hash). In
//! CSV it is a block of `#` comment lines above the mandatory header row; in
//! JSON it is a `meta` object beside `data`. Numbers are rounded to 12
//! significant digits and printed in plain decimal, so re-reading an artifact
//! and writing it again reproduces it byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::params::{ArRegime, BreakSchedule, GarchRegime, ShockMoments, TvArSpec, TvGarchSpec};
use crate::sim::ShockDist;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<String>,
    /// `prices[c][i]` is column `c` on `dates[i]`.
    pub prices: Vec<Vec<f64>>,
}

impl PriceSeries {
    /// `100·ln(p_t/p_{t-1})` for column `c`.
    pub fn returns(&self, c: usize) -> Vec<f64> {
        log_returns(&self.prices[c])
    }

    /// Date of each return (the later price date).
    pub fn return_dates(&self) -> &[NaiveDate] {
        &self.dates[1.min(self.dates.len())..]
    }
}

pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| 100.0 * (w[1].ln() - w[0].ln())).collect()
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        message: format!("bad date {s:?}: {e}"),
    })
}

/// Reads a comma-separated price file with a header row. `#` lines are skipped.
/// Dates must be ISO-8601 and strictly increasing; gaps are fine.
pub fn ingest_prices<R: Read>(reader: R, date_column: &str, price_columns: &[String]) -> Result<PriceSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing column {name:?} (have {:?})", headers.iter().collect::<Vec<_>>()),
        })
    };
    let date_idx = find(date_column)?;
    let price_idx = price_columns.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut prices = vec![Vec::new(); price_columns.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::Parse {
                line,
                message: format!("row has {} fields", record.len()),
            })
        };
        let date = parse_date(field(date_idx)?, line)?;
        if let Some(prev) = dates.last() {
            if date == *prev {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate date {date}"),
                });
            }
            if date < *prev {
                return Err(Error::Parse {
                    line,
                    message: format!("date {date} is earlier than {prev}"),
                });
            }
        }
        dates.push(date);
        for (c, &i) in price_idx.iter().enumerate() {
            let raw = field(i)?;
            let p: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad price {raw:?} in column {:?}", price_columns[c]),
            })?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Parse {
                    line,
                    message: format!("price {p} in column {:?} is not positive", price_columns[c]),
                });
            }
            prices[c].push(p);
        }
    }
    if dates.len() < 2 {
        return Err(Error::Degenerate(format!("{} price rows, need at least 2", dates.len())));
    }
    Ok(PriceSeries {
        dates,
        columns: price_columns.to_vec(),
        prices,
    })
}

pub fn ingest_prices_path(path: &Path, date_column: &str, price_columns: &[String]) -> Result<PriceSeries> {
    ingest_prices(File::open(path)?, date_column, price_columns)
}

/// One ISO date per line; blank lines and `#` comments are ignored.
pub fn read_dates<R: Read>(reader: R) -> Result<Vec<NaiveDate>> {
    let mut out: Vec<NaiveDate> = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let d = parse_date(s, i + 1)?;
        if out.last().is_some_and(|p| *p >= d) {
            return Err(Error::Parse {
                line: i + 1,
                message: "break dates must be strictly increasing".into(),
            });
        }
        out.push(d);
    }
    Ok(out)
}

pub fn read_dates_path(path: &Path) -> Result<Vec<NaiveDate>> {
    read_dates(File::open(path)?)
}

/// Index of the first observation on or after each break date.
pub fn dates_to_indices(observation_dates: &[NaiveDate], breaks: &[NaiveDate]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::with_capacity(breaks.len());
    for d in breaks {
        let i = observation_dates.partition_point(|x| x < d);
        if i == 0 || i >= observation_dates.len() {
            return Err(Error::InvalidSchedule(format!(
                "break date {d} must fall strictly inside the sample {}..{}",
                observation_dates.first().map_or(String::new(), |x| x.to_string()),
                observation_dates.last().map_or(String::new(), |x| x.to_string())
            )));
        }
        if out.last() == Some(&i) {
            return Err(Error::InvalidSchedule(format!("break date {d} maps to the same observation as the previous one")));
        }
        out.push(i);
    }
    Ok(out)
}

/// Rounds to 12 significant digits and prints in plain decimal.
pub fn format_value(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NaN".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub version: String,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Metadata {
    pub fn new(seed: Option<u64>, config_hash: String) -> Self {
        Self {
            version: VERSION.into(),
            seed,
            config_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_value(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, meta: &Metadata, out: W) -> Result<()> {
        let mut out = out;
        writeln!(out, "# version={}", meta.version)?;
        match meta.seed {
            Some(s) => writeln!(out, "# seed={s}")?,
            None => writeln!(out, "# seed=none")?,
        }
        writeln!(out, "# config_hash={}", meta.config_hash)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows as JSON objects keyed by header.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, c)| {
                        let v = match c {
                            Cell::Num(x) => format_value(*x)
                                .parse::<f64>()
                                .ok()
                                .and_then(serde_json::Number::from_f64)
                                .map_or(serde_json::Value::Null, serde_json::Value::Number),
                            Cell::Int(i) => serde_json::Value::from(*i),
                            Cell::Text(s) => serde_json::Value::from(s.clone()),
                        };
                        (h.clone(), v)
                    })
                    .collect::<serde_json::Map<_, _>>();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads an artifact CSV back: metadata, headers and raw string rows.
pub fn read_table_csv<R: Read>(reader: R) -> Result<(Metadata, Vec<String>, Vec<Vec<String>>)> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    let mut meta = Metadata {
        version: String::new(),
        seed: None,
        config_hash: String::new(),
    };
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once('=') {
            match k {
                "version" => meta.version = v.into(),
                "seed" => meta.seed = v.parse().ok(),
                "config_hash" => meta.config_hash = v.into(),
                _ => {}
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(String::from).collect());
    }
    Ok((meta, headers, rows))
}

/// Parses artifact rows back into cells: integers, then numbers, then text.
pub fn cells_from_strings(rows: &[Vec<String>]) -> Vec<Vec<Cell>> {
    rows.iter()
        .map(|r| {
            r.iter()
                .map(|s| {
                    if let Ok(i) = s.parse::<i64>() {
                        Cell::Int(i)
                    } else if let Ok(x) = s.parse::<f64>() {
                        Cell::Num(x)
                    } else {
                        Cell::Text(s.clone())
                    }
                })
                .collect()
        })
        .collect()
}

pub fn write_json<W: Write, T: Serialize>(meta: &Metadata, data: &T, out: W) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a Metadata,
        data: &'a T,
    }
    serde_json::to_writer_pretty(out, &Doc { meta, data })?;
    Ok(())
}

// ---- run configuration ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArConfig {
    /// Break offsets from the reference time, increasing.
    #[serde(default)]
    pub breaks: Vec<u64>,
    /// Most recent regime first.
    pub regimes: Vec<ArRegime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchConfig {
    #[serde(default)]
    pub breaks: Vec<u64>,
    /// Per-regime coefficients, most recent first.
    pub regimes: Option<Vec<GarchRegime>>,
    /// Break-dummy form: the pre-break regime...
    pub base: Option<GarchRegime>,
    /// ...and one increment per break, the oldest break first.
    pub increments: Option<Vec<GarchRegime>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "distribution", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShockConfig {
    #[default]
    Normal,
    StudentT {
        nu: f64,
    },
}

impl ShockConfig {
    pub fn dist(&self) -> ShockDist {
        match *self {
            ShockConfig::Normal => ShockDist::Normal,
            ShockConfig::StudentT { nu } => ShockDist::StudentT { nu },
        }
    }

    pub fn moments(&self) -> Result<ShockMoments> {
        self.dist().moments()
    }
}

fn default_burn_in() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub path_length: usize,
    pub path_count: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    /// Largest `k` tabulated.
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub horizon: usize,
    /// `(y_{t-k}, y_{t-k-1})` at the forecast origin.
    pub y_init: [f64; 2],
    /// `h_{t-k}` at the forecast origin.
    pub h_init: f64,
}

fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcfConfig {
    /// Offsets tabulated run from `from` down to `to`.
    pub from: i64,
    pub to: i64,
    pub lags: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Homoscedastic errors with this variance instead of the GARCH profile.
    pub error_variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncondConfig {
    pub from: i64,
    pub to: i64,
}

fn default_date_column() -> String {
    "date".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    #[serde(default = "default_date_column")]
    pub date_column: String,
    /// One column for univariate commands, two for `fit-biv`.
    pub price_columns: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default)]
    pub mean_lags: usize,
    #[serde(default = "yes")]
    pub asymmetry: bool,
    /// Break dates (ISO) switching on the dummies; `--dates` overrides.
    #[serde(default)]
    pub break_dates: Vec<NaiveDate>,
    /// Which increments are free at every break: any of `omega`, `alpha`, `gamma`, `beta`.
    pub free: Option<Vec<String>>,
    pub prune_level: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivariateBreakConfig {
    pub date: NaiveDate,
    /// Free shifts among `alpha12`, `alpha21`, `beta12`, `beta21`.
    pub free: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BivariateConfig {
    #[serde(default)]
    pub mean_lags: usize,
    #[serde(default = "yes")]
    pub asymmetry: bool,
    #[serde(default = "yes")]
    pub spillovers: bool,
    #[serde(default)]
    pub sign_shifts: bool,
    #[serde(default = "yes")]
    pub dcc: bool,
    #[serde(default)]
    pub breaks: Vec<BivariateBreakConfig>,
}

fn default_min_segment() -> usize {
    250
}

fn default_level() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreaksConfig {
    #[serde(default = "default_min_segment")]
    pub min_segment: usize,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl Default for BreaksConfig {
    fn default() -> Self {
        Self {
            min_segment: default_min_segment(),
            level: default_level(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub format: Option<Format>,
}

/// Everything a command needs. Sections irrelevant to a command are ignored by it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub ar: Option<ArConfig>,
    pub garch: Option<GarchConfig>,
    #[serde(default)]
    pub shocks: ShockConfig,
    pub simulate: Option<SimulateConfig>,
    pub solve: Option<SolveConfig>,
    pub forecast: Option<ForecastConfig>,
    pub acf: Option<AcfConfig>,
    pub uncond: Option<UncondConfig>,
    pub input: Option<InputConfig>,
    pub fit: Option<FitConfig>,
    pub bivariate: Option<BivariateConfig>,
    pub breaks: Option<BreaksConfig>,
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Schema checks that do not need data.
    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.garch {
            let by_regime = g.regimes.is_some();
            let by_dummies = g.base.is_some() || g.increments.is_some();
            if by_regime == by_dummies {
                return Err(Error::Config("[garch] needs either `regimes` or `base` + `increments`".into()));
            }
        }
        if let Some(f) = self.fit.as_ref().and_then(|f| f.free.as_ref()) {
            for name in f {
                if !["omega", "alpha", "gamma", "beta"].contains(&name.as_str()) {
                    return Err(Error::Config(format!("unknown dummy {name:?} in [fit].free")));
                }
            }
        }
        if let Some(b) = &self.bivariate {
            for br in &b.breaks {
                for name in &br.free {
                    if !["alpha12", "alpha21", "beta12", "beta21"].contains(&name.as_str()) {
                        return Err(Error::Config(format!("unknown shift {name:?} in [[bivariate.breaks]]")));
                    }
                }
            }
        }
        if let ShockConfig::StudentT { nu } = self.shocks {
            if !(nu > 4.0) {
                return Err(Error::Config(format!("Student-t shocks need nu > 4, got {nu}")));
            }
        }
        if let Some(b) = &self.breaks {
            if !(b.level > 0.0 && b.level < 1.0) || b.min_segment == 0 {
                return Err(Error::Config("[breaks] needs 0 < level < 1 and min_segment >= 1".into()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the parsed config, output
    /// settings excluded. Formatting, comments and key order do not matter.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn ar_spec(&self) -> Result<TvArSpec> {
        let a = self.ar.as_ref().ok_or_else(|| Error::Config("missing [ar] section".into()))?;
        TvArSpec::new(a.regimes.clone(), BreakSchedule::from_offsets(a.breaks.clone())?)
    }

    pub fn garch_spec(&self) -> Result<TvGarchSpec> {
        let g = self.garch.as_ref().ok_or_else(|| Error::Config("missing [garch] section".into()))?;
        let schedule = BreakSchedule::from_offsets(g.breaks.clone())?;
        match (&g.regimes, &g.base, &g.increments) {
            (Some(r), _, _) => TvGarchSpec::new(r.clone(), schedule),
            (None, Some(base), inc) => TvGarchSpec::from_dummies(*base, inc.as_deref().unwrap_or(&[]), schedule),
            _ => Err(Error::Config("[garch] needs `regimes` or `base`".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Piecewise;
    use proptest::prelude::*;

    const PRICES: &str = "date,close,other\n2000-01-03,100,5\n2000-01-04,101,5\n2000-01-06,99.5,5\n";

    #[test]
    fn returns_from_prices() {
        let s = ingest_prices(PRICES.as_bytes(), "date", &["close".into()]).unwrap();
        let r = s.returns(0);
        assert_eq!(r.len(), 2);
        assert!((r[0] - 0.995_033_085_316_808_3).abs() < 1e-12);
        assert_eq!(s.return_dates()[1], NaiveDate::from_ymd_opt(2000, 1, 6).unwrap());
        let flat = "date,p\n2001-01-01,7\n2001-01-02,7\n2001-01-03,7\n";
        let s = ingest_prices(flat.as_bytes(), "date", &["p".into()]).unwrap();
        assert!(s.returns(0).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn bad_rows_cite_their_line() {
        let text = "date,p\n2001-01-01,7\n2001-01-02,0\n";
        match ingest_prices(text.as_bytes(), "date", &["p".into()]) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("not positive"));
            }
            other => panic!("{other:?}"),
        }
        let dup = "date,p\n2001-01-01,7\n2001-01-01,8\n";
        assert!(matches!(ingest_prices(dup.as_bytes(), "date", &["p".into()]), Err(Error::Parse { line: 3, .. })));
        let unsorted = "date,p\n2001-01-02,7\n2001-01-01,8\n";
        assert!(matches!(ingest_prices(unsorted.as_bytes(), "date", &["p".into()]), Err(Error::Parse { line: 3, .. })));
        let junk = "date,p\n2001-01-01,7\n2001-13-01,8\n";
        assert!(matches!(ingest_prices(junk.as_bytes(), "date", &["p".into()]), Err(Error::Parse { line: 3, .. })));
        assert!(ingest_prices(PRICES.as_bytes(), "date", &["missing".into()]).is_err());
    }

    #[test]
    fn dates_file_and_mapping() {
        let d = read_dates("# breaks\n2000-01-04\n\n2000-01-05\n".as_bytes()).unwrap();
        let obs: Vec<NaiveDate> = ["2000-01-03", "2000-01-04", "2000-01-06", "2000-01-07"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        assert_eq!(dates_to_indices(&obs, &d).unwrap(), vec![1, 2]);
        assert!(read_dates("2000-01-05\n2000-01-04\n".as_bytes()).is_err());
        assert!(dates_to_indices(&obs, &["1999-01-01".parse().unwrap()]).is_err());
        assert!(dates_to_indices(&obs, &["2000-01-05".parse().unwrap(), "2000-01-06".parse().unwrap()]).is_err());
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_value(0.1 + 0.2), "0.3");
        assert_eq!(format_value(123456.789012345), "123456.789012");
        assert_eq!(format_value(-2.5e-7), "-0.00000025");
        assert_eq!(format_value(0.0), "0");
        assert_eq!(format_value(f64::NAN), "NaN");
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(xs in proptest::collection::vec(-1e9f64..1e9, 1..20)) {
            let meta = Metadata::new(Some(3), "abc".into());
            let mut t = Table::new(&["i", "x"]);
            for (i, x) in xs.iter().enumerate() {
                t.push(vec![i.into(), (*x).into()]);
            }
            let mut first = Vec::new();
            t.write_csv(&meta, &mut first).unwrap();
            let (m, h, rows) = read_table_csv(first.as_slice()).unwrap();
            prop_assert_eq!(&m, &meta);
            let again = Table { headers: h, rows: cells_from_strings(&rows) };
            let mut second = Vec::new();
            again.write_csv(&m, &mut second).unwrap();
            prop_assert_eq!(&first, &second);
            for (row, x) in rows.iter().zip(&xs) {
                let back: f64 = row[1].parse().unwrap();
                let expect: f64 = format_value(*x).parse().unwrap();
                prop_assert_eq!(back.to_bits(), expect.to_bits());
                prop_assert!((back - x).abs() <= 1e-11 * x.abs().max(1e-300));
            }
        }
    }

    const CONFIG: &str = r#"
seed = 42

[garch]
breaks = [326, 474, 3459]
base = { omega = 0.001, alpha = 0.018, gamma = 0.092, beta = 0.954 }
increments = [
  { omega = 0.0, alpha = -0.048, gamma = 0.113, beta = 0.039 },
  { omega = 0.0, alpha = 0.0, gamma = -0.094, beta = 0.0 },
  { omega = 0.0, alpha = -0.039, gamma = 0.023, beta = 0.0 },
]

[uncond]
from = 4000
to = -10

[output]
dir = "out"
"#;

    #[test]
    fn config_parses_and_builds_specs() {
        let c = RunConfig::from_toml(CONFIG).unwrap();
        let g = c.garch_spec().unwrap();
        assert_eq!(g.regimes().len(), 4);
        assert_eq!(g.regimes()[3].omega, 0.001);
        assert!((g.regimes()[0].alpha - (0.018 - 0.048 - 0.039)).abs() < 1e-15);
        assert_eq!(c.seed, Some(42));
        assert!(c.ar_spec().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{CONFIG}\n[simulate]\npath_length = 10\npath_count = 2\npath_cout = 3\n");
        assert!(matches!(RunConfig::from_toml(&bad), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("sed = 1"), Err(Error::Config(_))));
        let both = "[garch]\nregimes = [{ omega = 1.0, alpha = 0.1, gamma = 0.0, beta = 0.8 }]\nbase = { omega = 1.0, alpha = 0.1, gamma = 0.0, beta = 0.8 }\n";
        assert!(RunConfig::from_toml(both).is_err());
    }

    #[test]
    fn hash_tracks_meaning_not_layout() {
        let a = RunConfig::from_toml(CONFIG).unwrap();
        let reformatted = CONFIG.replace("seed = 42", "# comment\nseed    =   42").replace("dir = \"out\"", "dir = \"elsewhere\"");
        let b = RunConfig::from_toml(&reformatted).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::from_toml(&CONFIG.replace("beta = 0.954", "beta = 0.9540")).unwrap();
        assert_eq!(a.hash(), c.hash());
        let d = RunConfig::from_toml(&CONFIG.replace("seed = 42", "seed = 43")).unwrap();
        assert_ne!(a.hash(), d.hash());
        let e = RunConfig::from_toml(&CONFIG.replace("to = -10", "to = -11")).unwrap();
        assert_ne!(a.hash(), e.hash());
    }
}
