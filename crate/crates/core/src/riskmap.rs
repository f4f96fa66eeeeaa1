//! Traffic-light risk classes from forecast weekly incidence, an external
//! R-effective estimate and the testing rate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{format_date, parse_iso_date, RegionKey};

pub const MIN_TESTS_PER_MILLION: f64 = 10_000.0;
/// Weekly cases per 100,000 people below which a region is green.
pub const GREEN_INCIDENCE: f64 = 30.0;
pub const REFF_DESCENDING: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskColor {
    Grey,
    Green,
    Orange,
    Red,
}

impl RiskColor {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Grey => "grey",
            Self::Green => "green",
            Self::Orange => "orange",
            Self::Red => "red",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskDiagnostic {
    InsufficientTesting,
    MissingPopulation,
    /// High incidence without an R-effective value; treated as red.
    MissingReff,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskInput {
    pub region: RegionKey,
    pub forecast_weekly_cases: f64,
    pub r_eff: Option<f64>,
    pub tests_per_million: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskClass {
    pub color: RiskColor,
    /// Weekly cases per 100,000 people, when the population is known.
    pub incidence: Option<f64>,
    pub diagnostic: Option<RiskDiagnostic>,
}

pub fn classify(input: &RiskInput) -> Result<RiskClass> {
    if !(input.forecast_weekly_cases >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "forecast weekly cases must be non-negative, got {}",
            input.forecast_weekly_cases
        )));
    }
    let grey = |diagnostic, incidence| RiskClass { color: RiskColor::Grey, incidence, diagnostic: Some(diagnostic) };
    let incidence = input.region.population.map(|p| 100_000.0 * input.forecast_weekly_cases / p as f64);
    match input.tests_per_million {
        Some(t) if t >= MIN_TESTS_PER_MILLION => {}
        _ => return Ok(grey(RiskDiagnostic::InsufficientTesting, incidence)),
    }
    let Some(inc) = incidence else {
        return Ok(grey(RiskDiagnostic::MissingPopulation, None));
    };
    let (color, diagnostic) = if inc < GREEN_INCIDENCE {
        (RiskColor::Green, None)
    } else {
        match input.r_eff {
            Some(r) if r < REFF_DESCENDING => (RiskColor::Orange, None),
            Some(_) => (RiskColor::Red, None),
            None => (RiskColor::Red, Some(RiskDiagnostic::MissingReff)),
        }
    };
    Ok(RiskClass { color, incidence: Some(inc), diagnostic })
}

#[derive(Debug, Deserialize)]
struct ReffRow {
    region: String,
    date: String,
    r_eff: f64,
}

/// Most recent R-effective per region from `region,date,r_eff` rows,
/// ignoring rows dated after `as_of` when given.
pub fn read_reff(bytes: &[u8], as_of: Option<chrono::NaiveDate>) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut latest: BTreeMap<String, (chrono::NaiveDate, f64)> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<ReffRow>().enumerate() {
        let row = row.map_err(|e| Error::Row { row: i + 2, message: e.to_string() })?;
        let date = parse_iso_date(&row.date)?;
        if as_of.is_some_and(|a| date > a) {
            continue;
        }
        match latest.get(&row.region) {
            Some((d, _)) if *d == date => {
                return Err(Error::Conflict { region: row.region, date: format_date(date) });
            }
            Some((d, _)) if *d > date => {}
            _ => {
                latest.insert(row.region, (date, row.r_eff));
            }
        }
    }
    Ok(latest.into_iter().map(|(k, (_, r))| (k, r)).collect())
}

#[derive(Debug, Deserialize)]
struct TestsRow {
    region: String,
    tests_per_million: f64,
}

pub fn read_tests(bytes: &[u8]) -> Result<BTreeMap<String, f64>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<TestsRow>().enumerate() {
        let row = row.map_err(|e| Error::Row { row: i + 2, message: e.to_string() })?;
        if !(row.tests_per_million >= 0.0) {
            return Err(Error::Row { row: i + 2, message: "tests per million must be non-negative".into() });
        }
        if out.insert(row.region.clone(), row.tests_per_million).is_some() {
            return Err(Error::Row { row: i + 2, message: format!("duplicate region {}", row.region) });
        }
    }
    Ok(out)
}

pub fn write_riskmap_csv<W: Write>(rows: &[(RiskInput, RiskClass)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "color", "incidence", "r_eff"])?;
    for (input, class) in rows {
        w.write_record([
            input.region.id(),
            class.color.as_str().to_string(),
            class.incidence.map(|v| format!("{v:.3}")).unwrap_or_default(),
            input.r_eff.map(|v| format!("{v:.3}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn input(tests: Option<f64>, per_100k: f64, r_eff: Option<f64>) -> RiskInput {
        RiskInput {
            region: RegionKey::new("X").unwrap().with_population(1_000_000).unwrap(),
            forecast_weekly_cases: per_100k * 10.0,
            r_eff,
            tests_per_million: tests,
        }
    }

    fn color(i: &RiskInput) -> RiskColor {
        classify(i).unwrap().color
    }

    #[test]
    fn tabulated_cases() {
        assert_eq!(color(&input(Some(5_000.0), 10.0, Some(1.0))), RiskColor::Grey);
        assert_eq!(color(&input(Some(20_000.0), 10.0, None)), RiskColor::Green);
        assert_eq!(color(&input(Some(20_000.0), 50.0, Some(0.8))), RiskColor::Orange);
        assert_eq!(color(&input(Some(20_000.0), 50.0, Some(1.2))), RiskColor::Red);
    }

    #[test]
    fn boundaries() {
        assert_eq!(color(&input(Some(10_000.0), 10.0, None)), RiskColor::Green);
        assert_eq!(color(&input(Some(9_999.0), 10.0, None)), RiskColor::Grey);
        assert_eq!(color(&input(None, 10.0, None)), RiskColor::Grey);
        assert_eq!(color(&input(Some(20_000.0), 30.0, Some(0.5))), RiskColor::Orange);
        assert_eq!(color(&input(Some(20_000.0), 50.0, Some(0.9))), RiskColor::Red);
        let missing = classify(&input(Some(20_000.0), 50.0, None)).unwrap();
        assert_eq!((missing.color, missing.diagnostic), (RiskColor::Red, Some(RiskDiagnostic::MissingReff)));
    }

    #[test]
    fn missing_population_is_grey() {
        let mut i = input(Some(20_000.0), 50.0, Some(1.0));
        i.region.population = None;
        let c = classify(&i).unwrap();
        assert_eq!((c.color, c.diagnostic), (RiskColor::Grey, Some(RiskDiagnostic::MissingPopulation)));
        i.forecast_weekly_cases = -1.0;
        assert!(classify(&i).is_err());
    }

    #[test]
    fn csv_inputs() {
        let reff = b"region,date,r_eff\nA,2020-10-01,1.1\nA,2020-10-03,0.8\nB,2020-10-02,1.3\nA,2020-10-02,0.9\n";
        let m = read_reff(reff, None).unwrap();
        assert_eq!(m["A"], 0.8);
        assert_eq!(m["B"], 1.3);
        let cut = read_reff(reff, chrono::NaiveDate::from_ymd_opt(2020, 10, 2)).unwrap();
        assert_eq!(cut["A"], 0.9);
        assert!(read_reff(b"region,date,r_eff\nA,2020-10-01,1\nA,2020-10-01,2\n", None).is_err());

        let t = read_tests(b"region,tests_per_million\nA,12000\nB,500.5\n").unwrap();
        assert_eq!(t["B"], 500.5);
        assert!(read_tests(b"region,tests_per_million\nA,x\n").is_err());
    }

    #[test]
    fn csv_output() {
        let i = input(Some(20_000.0), 50.0, Some(0.8));
        let c = classify(&i).unwrap();
        let mut buf = Vec::new();
        write_riskmap_csv(&[(i, c)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "region,color,incidence,r_eff\nX,orange,50.000,0.800\n");
    }

    proptest! {
        #[test]
        fn monotone_in_incidence(a in 0.0f64..200.0, b in 0.0f64..200.0, r in prop::option::of(0.0f64..3.0)) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(color(&input(Some(5e4), lo, r)) <= color(&input(Some(5e4), hi, r)));
        }

        #[test]
        fn green_ignores_reff(inc in 0.0f64..29.99, r1 in 0.0f64..3.0, r2 in 0.0f64..3.0) {
            prop_assert_eq!(color(&input(Some(5e4), inc, Some(r1))), RiskColor::Green);
            prop_assert_eq!(color(&input(Some(5e4), inc, Some(r2))), RiskColor::Green);
        }
    }
}
