//! Reading daily count data from CSV and writing forecasts in the hub
//! quantile exchange format.
//!
//! Dates are carried as a start date plus day offsets; calendar formatting
//! only happens at the I/O boundary.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probabilistic::{QuantileForecast, Target, QUANTILE_LEVELS};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub country: String,
    pub subregion: Option<String>,
    pub population: Option<u64>,
    /// Tests per million persons, stored as-is from the source.
    #[serde(default)]
    pub tests_per_million: Option<OrderedTests>,
}

/// Non-negative tests-per-million figure with a total order so that
/// [`RegionKey`] can be used as a map key.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrderedTests(pub f64);

impl PartialEq for OrderedTests {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrderedTests {}

impl PartialOrd for OrderedTests {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedTests {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for OrderedTests {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl RegionKey {
    pub fn new(country: impl Into<String>) -> Result<Self> {
        let country = country.into();
        if country.trim().is_empty() {
            return Err(Error::InvalidParameter("region country must be non-empty".into()));
        }
        Ok(Self { country, subregion: None, population: None, tests_per_million: None })
    }

    pub fn with_subregion(mut self, subregion: impl Into<String>) -> Self {
        let s = subregion.into();
        self.subregion = if s.is_empty() { None } else { Some(s) };
        self
    }

    pub fn with_population(mut self, population: u64) -> Result<Self> {
        if population == 0 {
            return Err(Error::InvalidParameter("population must be positive".into()));
        }
        self.population = Some(population);
        Ok(self)
    }

    pub fn with_tests_per_million(mut self, tests: f64) -> Result<Self> {
        if !(tests.is_finite() && tests >= 0.0) {
            return Err(Error::InvalidParameter("tests per million must be non-negative".into()));
        }
        self.tests_per_million = Some(OrderedTests(tests));
        Ok(self)
    }

    /// Identifier used in every CSV output: `country` or `country/subregion`.
    pub fn id(&self) -> String {
        match &self.subregion {
            Some(s) => format!("{}/{}", self.country, s),
            None => self.country.clone(),
        }
    }

    /// Inverse of [`RegionKey::id`]; splits at the first `/`.
    pub fn from_id(id: &str) -> Result<Self> {
        match id.split_once('/') {
            Some((c, s)) => Ok(Self::new(c)?.with_subregion(s)),
            None => Self::new(id),
        }
    }
}

impl fmt::Display for RegionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesKind {
    Cases,
    Deaths,
}

impl SeriesKind {
    /// Suffix used in hub target names.
    pub fn hub_suffix(self) -> &'static str {
        match self {
            SeriesKind::Cases => "inc case",
            SeriesKind::Deaths => "inc death",
        }
    }
}

/// Dated sequence of daily counts for one region. `None` marks a day with no
/// report.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub region: RegionKey,
    pub start_date: NaiveDate,
    pub values: Vec<Option<f64>>,
    pub kind: SeriesKind,
}

impl DailySeries {
    pub fn new(
        region: RegionKey,
        start_date: NaiveDate,
        values: Vec<Option<f64>>,
        kind: SeriesKind,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("series must contain at least one day".into()));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("series values must be finite".into()));
        }
        Ok(Self { region, start_date, values, kind })
    }

    /// Fully observed series from plain values.
    pub fn from_values(
        region: RegionKey,
        start_date: NaiveDate,
        values: &[f64],
        kind: SeriesKind,
    ) -> Result<Self> {
        Self::new(region, start_date, values.iter().map(|&v| Some(v)).collect(), kind)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Duration::days(index as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.len() - 1)
    }

    /// Day offset of `date`, if it lies inside the series.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start_date).num_days();
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    /// The series restricted to days `0..=last`.
    pub fn truncated(&self, last: usize) -> DailySeries {
        let end = (last + 1).min(self.len());
        DailySeries {
            region: self.region.clone(),
            start_date: self.start_date,
            values: self.values[..end].to_vec(),
            kind: self.kind,
        }
    }

    /// Values with absent days read as zero.
    pub fn values_or_zero(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.unwrap_or(0.0)).collect()
    }
}

pub fn format_date(date: NaiveDate) -> String {
    date.format("%Y-%m-%d").to_string()
}

pub fn parse_iso_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|e| Error::Format(format!("invalid date `{s}`: {e}")))
}

fn parse_jhu_date(s: &str) -> Result<NaiveDate> {
    let parts: Vec<&str> = s.trim().split('/').collect();
    let bad = || Error::Format(format!("unparseable date column `{s}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let month: u32 = parts[0].parse().map_err(|_| bad())?;
    let day: u32 = parts[1].parse().map_err(|_| bad())?;
    let mut year: i32 = parts[2].parse().map_err(|_| bad())?;
    if parts[2].len() <= 2 {
        year += 2000;
    }
    NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)
}

const JHU_PREFIX: [&str; 4] = ["Province/State", "Country/Region", "Lat", "Long"];

/// Parse the wide cumulative layout (one row per region, one column per
/// day). Daily values are first differences; negative differences are kept.
pub fn parse_jhu_wide(csv_bytes: &[u8], kind: SeriesKind) -> Result<Vec<DailySeries>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_bytes);
    let headers = reader.headers()?.clone();
    if headers.len() < JHU_PREFIX.len() + 1 {
        return Err(Error::Format("header has no date columns".into()));
    }
    for (got, want) in headers.iter().zip(JHU_PREFIX) {
        // Some snapshots spell the longitude column `Long_`.
        if got.trim() != want && !(want == "Long" && got.trim() == "Long_") {
            return Err(Error::Format(format!("expected header column `{want}`, found `{got}`")));
        }
    }
    let dates = headers
        .iter()
        .skip(JHU_PREFIX.len())
        .map(parse_jhu_date)
        .collect::<Result<Vec<_>>>()?;
    for pair in dates.windows(2) {
        if pair[1] - pair[0] != Duration::days(1) {
            return Err(Error::Format(format!(
                "date columns not consecutive: {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    let start = dates[0];

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Row { row, message: e.to_string() })?;
        if record.len() != headers.len() {
            return Err(Error::Row {
                row,
                message: format!("expected {} cells, found {}", headers.len(), record.len()),
            });
        }
        let country = record[1].trim();
        let region = RegionKey::new(country)
            .map_err(|e| Error::Row { row, message: e.to_string() })?
            .with_subregion(record[0].trim());
        let mut prev = 0.0;
        let mut values = Vec::with_capacity(dates.len());
        for cell in record.iter().skip(JHU_PREFIX.len()) {
            let cum: f64 = cell.trim().parse().map_err(|_| Error::Row {
                row,
                message: format!("non-numeric cell `{cell}`"),
            })?;
            if !cum.is_finite() {
                return Err(Error::Row { row, message: format!("non-finite cell `{cell}`") });
            }
            values.push(Some(cum - prev));
            prev = cum;
        }
        out.push(DailySeries { region, start_date: start, values, kind });
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct LongRow {
    region: String,
    date: String,
    value: String,
}

/// Parse the long layout `region,date,value`. Blank values and days missing
/// between a region's first and last date become absent values.
pub fn parse_long(csv_bytes: &[u8], kind: SeriesKind) -> Result<Vec<DailySeries>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_bytes);
    let headers = reader.headers()?;
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols != ["region", "date", "value"] {
        return Err(Error::Format(format!("expected header `region,date,value`, found `{}`", cols.join(","))));
    }

    let mut by_region: BTreeMap<String, BTreeMap<NaiveDate, Option<f64>>> = BTreeMap::new();
    for (i, rec) in reader.deserialize::<LongRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let date = parse_iso_date(&rec.date).map_err(|e| Error::Row { row, message: e.to_string() })?;
        let value = match rec.value.trim() {
            "" => None,
            s => {
                let v: f64 = s
                    .parse()
                    .map_err(|_| Error::Row { row, message: format!("non-numeric value `{s}`") })?;
                if !v.is_finite() {
                    return Err(Error::Row { row, message: format!("non-finite value `{s}`") });
                }
                Some(v)
            }
        };
        let region = rec.region.trim().to_string();
        if region.is_empty() {
            return Err(Error::Row { row, message: "empty region".into() });
        }
        let days = by_region.entry(region.clone()).or_default();
        if days.insert(date, value).is_some() {
            return Err(Error::Conflict { region, date: format_date(date) });
        }
    }

    by_region
        .into_iter()
        .map(|(id, days)| {
            let start = *days.keys().next().expect("region has at least one row");
            let end = *days.keys().next_back().expect("region has at least one row");
            let n = (end - start).num_days() as usize + 1;
            let mut values = vec![None; n];
            for (d, v) in days {
                values[(d - start).num_days() as usize] = v;
            }
            DailySeries::new(RegionKey::from_id(&id)?, start, values, kind)
        })
        .collect()
}

/// Write series in the long layout. Absent values are written as blank cells.
pub fn write_long(series: &[DailySeries]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["region", "date", "value"])?;
    for s in series {
        let id = s.region.id();
        for (i, v) in s.values.iter().enumerate() {
            let value = v.map(|x| x.to_string()).unwrap_or_default();
            w.write_record([id.as_str(), &format_date(s.date_at(i)), &value])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// One forecast destined for the hub file.
#[derive(Debug, Clone)]
pub struct HubForecast {
    pub location: String,
    pub kind: SeriesKind,
    pub forecast: QuantileForecast,
}

/// Hub target name, e.g. `1 wk ahead inc case`. Only weekly totals have a
/// hub representation.
pub fn hub_target(target: Target, kind: SeriesKind) -> Result<String> {
    match target {
        Target::WeeklyTotal(k) => Ok(format!("{k} wk ahead {}", kind.hub_suffix())),
        Target::DailyMean(h) => Err(Error::Integrity(format!(
            "daily-mean target h={h} has no hub representation"
        ))),
    }
}

/// Values are written with three decimals; zero is normalised so `-0.000`
/// never appears.
fn format_value(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

/// Serialize weekly quantile forecasts as hub CSV rows
/// (`forecast_date,target,target_end_date,location,type,quantile,value`).
///
/// Rows are sorted by location, target, then quantile, with the point row
/// (blank quantile) first in each group. Forecasts that violate quantile
/// monotonicity or non-negativity are refused.
pub fn write_hub_quantiles(forecasts: &[HubForecast], origin_date: NaiveDate) -> Result<Vec<u8>> {
    struct Group<'a> {
        location: &'a str,
        target: String,
        end_date: NaiveDate,
        fc: &'a QuantileForecast,
    }

    let mut groups = Vec::with_capacity(forecasts.len());
    for hf in forecasts {
        let fc = &hf.forecast;
        fc.check_integrity()?;
        let k = match fc.target {
            Target::WeeklyTotal(k) => k,
            Target::DailyMean(_) => {
                return Err(Error::Integrity("only weekly targets can be written to hub files".into()))
            }
        };
        groups.push(Group {
            location: &hf.location,
            target: hub_target(fc.target, hf.kind)?,
            end_date: origin_date + Duration::days(7 * k as i64),
            fc,
        });
    }
    groups.sort_by(|a, b| (a.location, &a.target).cmp(&(b.location, &b.target)));

    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["forecast_date", "target", "target_end_date", "location", "type", "quantile", "value"])?;
    let fdate = format_date(origin_date);
    for g in &groups {
        let end = format_date(g.end_date);
        w.write_record([&fdate, &g.target, &end, g.location, "point", "", &format_value(g.fc.point)])?;
        for (level, q) in QUANTILE_LEVELS.iter().zip(&g.fc.quantiles) {
            w.write_record([&fdate, &g.target, &end, g.location, "quantile", &level.to_string(), &format_value(*q)])?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// One parsed hub row.
#[derive(Debug, Clone, PartialEq)]
pub struct HubRow {
    pub forecast_date: NaiveDate,
    pub target: String,
    pub target_end_date: NaiveDate,
    pub location: String,
    pub quantile: Option<f64>,
    pub value: f64,
}

/// Read a hub-format quantile CSV (ours or any other model's submission).
pub fn parse_hub_quantiles(csv_bytes: &[u8]) -> Result<Vec<HubRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing hub column `{name}`")))
    };
    let (c_fd, c_t, c_ed, c_loc, c_ty, c_q, c_v) = (
        col("forecast_date")?,
        col("target")?,
        col("target_end_date")?,
        col("location")?,
        col("type")?,
        col("quantile")?,
        col("value")?,
    );
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let err = |m: String| Error::Row { row, message: m };
        let quantile = match rec[c_ty].trim() {
            "point" => None,
            "quantile" => Some(rec[c_q].trim().parse::<f64>().map_err(|_| err(format!("bad quantile `{}`", &rec[c_q])))?),
            other => return Err(err(format!("unknown row type `{other}`"))),
        };
        rows.push(HubRow {
            forecast_date: parse_iso_date(&rec[c_fd]).map_err(|e| err(e.to_string()))?,
            target: rec[c_t].trim().to_string(),
            target_end_date: parse_iso_date(&rec[c_ed]).map_err(|e| err(e.to_string()))?,
            location: rec[c_loc].trim().to_string(),
            quantile,
            value: rec[c_v].trim().parse().map_err(|_| err(format!("bad value `{}`", &rec[c_v])))?,
        });
    }
    Ok(rows)
}
