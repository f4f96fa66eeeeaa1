//! Absolute percentage errors grouped by the growth rate of the smoothed
//! weekly series at the forecast origin.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bspline::PenalizedSpline;
use crate::error::{Error, Result};
use crate::stats::quantiles;

/// Weekly observations needed before a region's growth curve is fitted.
pub const MIN_WEEKS: usize = 8;
/// Knot spacing of the growth curve, in weeks.
pub const KNOT_SPACING_WEEKS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOrigin {
    /// Origin position on the weekly axis (week 0 is the first total).
    pub week_position: f64,
    pub method_ape: f64,
    pub baseline_ape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthInput {
    pub region: String,
    pub weekly: Vec<f64>,
    pub origins: Vec<GrowthOrigin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratificationRow {
    pub bucket: i64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub method_q25: f64,
    pub method_median: f64,
    pub method_q75: f64,
    pub baseline_q25: f64,
    pub baseline_median: f64,
    pub baseline_q75: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StratificationTable {
    pub bucket_width: f64,
    pub rows: Vec<StratificationRow>,
    /// Origins dropped because the region was too short or the fitted
    /// level at the origin was not positive.
    pub excluded_origins: usize,
}

fn bucket_of(rate: f64, width: f64) -> i64 {
    // Round-off around zero must not spill into the negative bucket.
    (rate / width + 1e-9).floor() as i64
}

/// Pool origins across regions into growth-rate buckets `width` wide
/// (`0.01` gives one percentage point per week).
pub fn growth_rate_stratification(panel: &[GrowthInput], width: f64) -> Result<StratificationTable> {
    if !(width > 0.0) {
        return Err(Error::InvalidParameter("bucket width must be positive".into()));
    }
    let mut buckets: BTreeMap<i64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut excluded = 0;
    for input in panel {
        if input.weekly.len() < MIN_WEEKS {
            excluded += input.origins.len();
            continue;
        }
        let x: Vec<f64> = (0..input.weekly.len()).map(|w| w as f64).collect();
        let spline = PenalizedSpline::fit(&x, &input.weekly, KNOT_SPACING_WEEKS)?;
        for o in &input.origins {
            match spline.growth_rate(o.week_position) {
                Some(rate) => {
                    let e = buckets.entry(bucket_of(rate, width)).or_default();
                    e.0.push(o.method_ape);
                    e.1.push(o.baseline_ape);
                }
                None => excluded += 1,
            }
        }
    }
    let rows = buckets
        .into_iter()
        .map(|(bucket, (m, b))| {
            let lv = [0.25, 0.5, 0.75];
            let mq = quantiles(&m, &lv).expect("bucket is non-empty");
            let bq = quantiles(&b, &lv).expect("bucket is non-empty");
            StratificationRow {
                bucket,
                lower: bucket as f64 * width,
                upper: (bucket + 1) as f64 * width,
                n: m.len(),
                method_q25: mq[0],
                method_median: mq[1],
                method_q75: mq[2],
                baseline_q25: bq[0],
                baseline_median: bq[1],
                baseline_q75: bq[2],
            }
        })
        .collect();
    Ok(StratificationTable { bucket_width: width, rows, excluded_origins: excluded })
}

impl StratificationTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "bucket_lo",
            "bucket_hi",
            "method_median",
            "method_q25",
            "method_q75",
            "baseline_median",
            "baseline_q25",
            "baseline_q75",
            "n",
        ])?;
        for r in &self.rows {
            let cells = [
                r.lower,
                r.upper,
                r.method_median,
                r.method_q25,
                r.method_q75,
                r.baseline_median,
                r.baseline_q25,
                r.baseline_q75,
            ];
            let mut rec: Vec<String> = cells.iter().map(|v| format!("{v:.6}")).collect();
            rec.push(r.n.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
