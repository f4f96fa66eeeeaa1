//! Cleaning of raw daily reports: negative corrections, delayed-report
//! imputation and detection of a missing final report.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::{DailySeries, RegionKey, SeriesKind};

/// Days of history needed before a negative value for the weekly growth
/// factor `X_{t-1} / X_{t-8}` to be fully defined.
pub const NEGATIVE_FIX_MIN_HISTORY: usize = 14;

const LAMBDA_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// A zero is treated as a missing report when its Poisson probability
    /// `exp(-lambda)` falls below this value.
    pub p_zero_threshold: f64,
    pub min_run_for_imputation: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { p_zero_threshold: 0.01, min_run_for_imputation: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Observed,
    Imputed,
    Rescaled,
    /// Negative report replaced by a growth-adjusted estimate.
    Replaced,
    /// No report and nothing to impute from (leading gap, or trailing gap
    /// beyond the anchor). The stored value is 0.
    Missing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreprocessNote {
    /// Negative value with too little history; replaced by zero.
    ShortHistoryNegative { index: usize },
    /// Weekly sum two weeks back was zero; growth factor set to 1.
    ZeroGrowthBase { index: usize },
    /// Cumulative total could not be preserved (raw cumulative negative or no
    /// positive history to rescale).
    CumulativeNotPreserved { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSeries {
    pub region: RegionKey,
    pub start_date: NaiveDate,
    pub kind: SeriesKind,
    pub values: Vec<f64>,
    /// Index of the last trusted observation.
    pub forecast_anchor: usize,
    pub provenance: Vec<Provenance>,
    pub notes: Vec<PreprocessNote>,
}

impl CleanSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values up to and including the anchor.
    pub fn trusted(&self) -> &[f64] {
        &self.values[..=self.forecast_anchor]
    }

    /// Back to a [`DailySeries`]; days marked `Missing` become absent.
    pub fn to_daily(&self) -> DailySeries {
        DailySeries {
            region: self.region.clone(),
            start_date: self.start_date,
            values: self
                .values
                .iter()
                .zip(&self.provenance)
                .map(|(&v, &p)| (p != Provenance::Missing).then_some(v))
                .collect(),
            kind: self.kind,
        }
    }

    /// A zero that stands for "nothing reported". A negative correction that
    /// was replaced by zero is a report, so it is not a gap.
    fn is_gap(&self, i: usize) -> bool {
        self.values[i] == 0.0 && self.provenance[i] != Provenance::Replaced
    }
}

fn weekly_sum(values: &[f64], end: usize) -> f64 {
    values[end + 1 - 7..=end].iter().sum()
}

/// Replace negative reports, keeping the cumulative count at each negative
/// day equal to the raw cumulative count.
///
/// A negative `x_t` becomes `e_t = x_{t-7} * X_{t-1} / X_{t-8}` where `X_s` is
/// the 7-day sum ending at `s`. Everything up to and including `t` is then
/// multiplied by `c = R_t / (C_{t-1} + e_t)` with `R_t` the raw cumulative
/// count through `t`; `c` is floored at zero.
pub fn fix_negatives(series: &DailySeries) -> CleanSeries {
    let n = series.len();
    let mut values = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for v in &series.values {
        match v {
            Some(x) => {
                values.push(*x);
                provenance.push(Provenance::Observed);
            }
            None => {
                values.push(0.0);
                provenance.push(Provenance::Missing);
            }
        }
    }
    let mut notes = Vec::new();

    // Running cumulative of corrected values; equals the raw cumulative by
    // construction whenever the previous correction preserved it.
    let mut prior: f64 = 0.0;
    for t in 0..n {
        let x = values[t];
        if x >= 0.0 {
            prior += x;
            continue;
        }
        let estimate = if t >= NEGATIVE_FIX_MIN_HISTORY {
            let recent = weekly_sum(&values, t - 1);
            let base = weekly_sum(&values, t - 8);
            let growth = if base > 0.0 {
                recent / base
            } else {
                notes.push(PreprocessNote::ZeroGrowthBase { index: t });
                1.0
            };
            values[t - 7] * growth
        } else {
            notes.push(PreprocessNote::ShortHistoryNegative { index: t });
            0.0
        };
        let raw_cum = prior + x;
        let denom = prior + estimate;
        if denom > 0.0 {
            let c = (raw_cum / denom).max(0.0);
            if raw_cum < 0.0 {
                notes.push(PreprocessNote::CumulativeNotPreserved { index: t });
            }
            for s in 0..t {
                values[s] *= c;
                if provenance[s] == Provenance::Observed && c != 1.0 {
                    provenance[s] = Provenance::Rescaled;
                }
            }
            values[t] = estimate * c;
            prior = values[..=t].iter().sum();
        } else {
            notes.push(PreprocessNote::CumulativeNotPreserved { index: t });
            values[t] = 0.0;
        }
        provenance[t] = Provenance::Replaced;
    }

    CleanSeries {
        region: series.region.clone(),
        start_date: series.start_date,
        kind: series.kind,
        forecast_anchor: n.saturating_sub(1),
        values,
        provenance,
        notes,
    }
}

fn poisson_rate_before(values: &[f64], end: usize) -> Option<f64> {
    let lo = end.saturating_sub(LAMBDA_WINDOW);
    let window = &values[lo..end];
    (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64)
}

/// Walk back from the anchor while the final value is a zero that is
/// implausible under a Poisson rate estimated from the preceding week.
pub fn detect_trailing_missing(mut series: CleanSeries, config: &PreprocessConfig) -> CleanSeries {
    if series.is_empty() {
        return series;
    }
    while series.forecast_anchor > 0 && series.is_gap(series.forecast_anchor) {
        let t = series.forecast_anchor;
        let drop = series.provenance[t] == Provenance::Missing
            || poisson_rate_before(&series.values, t)
                .is_some_and(|lambda| (-lambda).exp() < config.p_zero_threshold);
        if !drop {
            break;
        }
        series.provenance[t] = Provenance::Missing;
        series.forecast_anchor -= 1;
    }
    series
}

/// Spread a report that follows a run of implausible zeros uniformly over
/// the run and the reporting day. Runs containing absent days are always
/// spread; runs at the very start of the series are left alone.
pub fn impute_zero_runs(mut series: CleanSeries, config: &PreprocessConfig) -> CleanSeries {
    let end = if series.is_empty() { 0 } else { series.forecast_anchor + 1 };
    let mut i = 0;
    while i < end {
        if !series.is_gap(i) {
            i += 1;
            continue;
        }
        let start = i;
        while i < end && series.is_gap(i) {
            i += 1;
        }
        // `i` is now the reporting day after the run, if any.
        if i >= end || start == 0 {
            continue;
        }
        let run = i - start;
        let known_missing = series.provenance[start..i].contains(&Provenance::Missing);
        let implausible = run >= config.min_run_for_imputation.max(1)
            && poisson_rate_before(&series.values, start)
                .is_some_and(|lambda| (-lambda).exp() < config.p_zero_threshold);
        // A corrected negative can end a run with a zero report; there is
        // nothing to spread, and the day keeps its provenance.
        let last = if series.values[i] > 0.0 { i } else { i - 1 };
        if known_missing || (implausible && last == i) {
            let share = series.values[i] / (run + 1) as f64;
            for s in start..=last {
                series.values[s] = share;
                series.provenance[s] = Provenance::Imputed;
            }
        }
        i += 1;
    }
    series
}

/// Negative fixes, then imputation, then trailing-missing detection.
pub fn preprocess_pipeline(series: &DailySeries, config: &PreprocessConfig) -> CleanSeries {
    reprocess(fix_negatives(series), config)
}

/// Zero-run imputation and trailing detection on a series that already
/// carries provenance. Idempotent: `reprocess(reprocess(x)) == reprocess(x)`.
pub fn reprocess(series: CleanSeries, config: &PreprocessConfig) -> CleanSeries {
    detect_trailing_missing(impute_zero_runs(series, config), config)
}
