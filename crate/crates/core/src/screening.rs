//! Data-quality screening on raw series: reporting coverage, reporting gaps
//! and MAD outliers, followed by the region selection rule.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DailySeries, RegionKey};
use crate::stats::median;

/// Consistency constant turning a MAD into a normal standard deviation.
pub const MAD_SCALE: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningConfig {
    /// Width of the sliding MAD window. Even widths take one more day
    /// before the centre than after it.
    pub mad_window: usize,
    /// Flag points more than this many scaled MADs from the local median.
    pub mad_threshold: f64,
    pub min_reporting_fraction: f64,
    pub max_gap_days: usize,
    pub n_exclude_outliers: usize,
}

impl Default for ScreeningConfig {
    fn default() -> Self {
        Self { mad_window: 22, mad_threshold: 2.0, min_reporting_fraction: 0.70, max_gap_days: 5, n_exclude_outliers: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    LowReporting,
    LongGap,
    ManyOutliers,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LowReporting => "low_reporting",
            Self::LongGap => "long_gap",
            Self::ManyOutliers => "many_outliers",
        }
    }
}

/// Per-region quantities the selection rule ranks on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningMetrics {
    pub reporting_fraction: f64,
    pub max_missing_run: usize,
    pub outlier_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningReport {
    pub region: RegionKey,
    pub reporting_fraction: f64,
    pub max_missing_run: usize,
    pub outlier_count: usize,
    pub selected: bool,
    pub exclusion_reason: Option<ExclusionReason>,
}

fn window_bounds(i: usize, n: usize, width: usize) -> (usize, usize) {
    let before = width / 2;
    let start = i.saturating_sub(before).min(n - width);
    (start, start + width)
}

/// Flag points far from the median of their sliding window.
pub fn mad_outliers(series: &[f64], cfg: &ScreeningConfig) -> Result<Vec<bool>> {
    let w = cfg.mad_window;
    if w < 2 {
        return Err(Error::InvalidParameter("MAD window must hold at least two points".into()));
    }
    if series.len() < w {
        return Err(Error::InsufficientHistory { needed: w, available: series.len() });
    }
    let n = series.len();
    let mut dev = Vec::with_capacity(w);
    Ok((0..n)
        .map(|i| {
            let (lo, hi) = window_bounds(i, n, w);
            let win = &series[lo..hi];
            let m = median(win).expect("window is non-empty");
            dev.clear();
            dev.extend(win.iter().map(|x| (x - m).abs()));
            let mad = median(&dev).expect("window is non-empty");
            let d = (series[i] - m).abs();
            if mad == 0.0 {
                d != 0.0
            } else {
                d > cfg.mad_threshold * MAD_SCALE * mad
            }
        })
        .collect())
}

/// Coverage, longest gap and outlier count of a raw series. Days before the
/// first positive report are ignored; afterwards zero or absent days count
/// as not reported.
pub fn screen_series(series: &DailySeries, cfg: &ScreeningConfig) -> Result<ScreeningMetrics> {
    let raw = series.values_or_zero();
    let Some(first) = raw.iter().position(|&v| v > 0.0) else {
        return Ok(ScreeningMetrics { reporting_fraction: 0.0, max_missing_run: raw.len(), outlier_count: 0 });
    };
    let active = &raw[first..];
    let reported = active.iter().filter(|&&v| v > 0.0).count();
    let mut longest = 0;
    let mut run = 0;
    for &v in active {
        run = if v > 0.0 { 0 } else { run + 1 };
        longest = longest.max(run);
    }
    let outlier_count = if active.len() >= cfg.mad_window {
        mad_outliers(active, cfg)?.into_iter().filter(|&f| f).count()
    } else {
        0
    };
    Ok(ScreeningMetrics {
        reporting_fraction: reported as f64 / active.len() as f64,
        max_missing_run: longest,
        outlier_count,
    })
}

/// Apply the three exclusion rules in order. At the outlier cut every
/// region tied with the last excluded rank is excluded too; regions
/// without any outliers are never excluded by that rule.
pub fn select_regions(inputs: Vec<(RegionKey, ScreeningMetrics)>, cfg: &ScreeningConfig) -> Vec<ScreeningReport> {
    let mut reports: Vec<ScreeningReport> = inputs
        .into_iter()
        .map(|(region, m)| {
            let reason = if m.reporting_fraction < cfg.min_reporting_fraction {
                Some(ExclusionReason::LowReporting)
            } else if m.max_missing_run > cfg.max_gap_days {
                Some(ExclusionReason::LongGap)
            } else {
                None
            };
            ScreeningReport {
                region,
                reporting_fraction: m.reporting_fraction,
                max_missing_run: m.max_missing_run,
                outlier_count: m.outlier_count,
                selected: reason.is_none(),
                exclusion_reason: reason,
            }
        })
        .collect();

    let mut counts: Vec<usize> = reports.iter().filter(|r| r.selected).map(|r| r.outlier_count).collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    if cfg.n_exclude_outliers > 0 && !counts.is_empty() {
        let cut = counts[cfg.n_exclude_outliers.min(counts.len()) - 1].max(1);
        for r in reports.iter_mut().filter(|r| r.selected && r.outlier_count >= cut) {
            r.selected = false;
            r.exclusion_reason = Some(ExclusionReason::ManyOutliers);
        }
    }
    reports.sort_by(|a, b| a.region.cmp(&b.region));
    reports
}

pub fn write_screening_csv<W: Write>(reports: &[ScreeningReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "fraction", "max_gap", "outliers", "selected", "reason"])?;
    for r in reports {
        w.write_record([
            r.region.id(),
            format!("{:.4}", r.reporting_fraction),
            r.max_missing_run.to_string(),
            r.outlier_count.to_string(),
            r.selected.to_string(),
            r.exclusion_reason.map(|e| e.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn cfg() -> ScreeningConfig {
        ScreeningConfig::default()
    }

    fn key(i: usize) -> RegionKey {
        RegionKey::new(format!("R{i:03}")).unwrap()
    }

    fn metrics(fraction: f64, gap: usize, outliers: usize) -> ScreeningMetrics {
        ScreeningMetrics { reporting_fraction: fraction, max_missing_run: gap, outlier_count: outliers }
    }

    #[test]
    fn single_spike_in_constant() {
        let mut x = vec![10.0; 40];
        x[17] = 100.0;
        let flags = mad_outliers(&x, &cfg()).unwrap();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 1);
        assert!(flags[17]);
    }

    #[test]
    fn spike_above_scaled_mad() {
        // Alternating 99.5/100.5: every window has median 100 and MAD 0.5.
        let x: Vec<f64> = (0..44).map(|i| [99.5, 100.5][i % 2]).collect();
        let mut y = x.clone();
        y[20] = 105.0;
        let flags = mad_outliers(&y, &cfg()).unwrap();
        assert!(flags[20]);
        assert!(!mad_outliers(&x, &cfg()).unwrap().iter().any(|&f| f));
    }

    #[test]
    fn gentle_line_is_clean() {
        // Noise keeps the MAD near 0.5; a slope of 0.02 moves the window
        // median by at most 0.22, far below 2 * 1.4826 * 0.5.
        let x: Vec<f64> = (0..60).map(|i| 0.02 * i as f64 + [0.0, 1.0, 0.5, -0.5, 0.25][i % 5]).collect();
        assert!(!mad_outliers(&x, &cfg()).unwrap().iter().any(|&f| f));
    }

    #[test]
    fn window_layout() {
        assert_eq!(window_bounds(0, 50, 22), (0, 22));
        assert_eq!(window_bounds(11, 50, 22), (0, 22));
        assert_eq!(window_bounds(12, 50, 22), (1, 23));
        assert_eq!(window_bounds(49, 50, 22), (28, 50));
        assert_eq!(window_bounds(20, 50, 23), (9, 32));
        assert!(mad_outliers(&[1.0; 21], &cfg()).is_err());
    }

    #[test]
    fn reporting_metrics() {
        let start = NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
        let mut v: Vec<Option<f64>> = vec![Some(0.0); 5];
        v.extend((0..30).map(|i| if (10..16).contains(&i) { Some(0.0) } else { Some(5.0) }));
        v[20] = None;
        let s = DailySeries::new(key(0), start, v, crate::ingest::SeriesKind::Cases).unwrap();
        let m = screen_series(&s, &cfg()).unwrap();
        assert_eq!(m.max_missing_run, 6);
        assert!((m.reporting_fraction - 24.0 / 30.0).abs() < 1e-12);
    }

    #[test]
    fn exclusion_boundaries() {
        let inputs = vec![
            (key(0), metrics(0.70, 0, 0)),
            (key(1), metrics(0.6999, 0, 0)),
            (key(2), metrics(0.60, 0, 0)),
            (key(3), metrics(1.0, 5, 0)),
            (key(4), metrics(1.0, 6, 0)),
        ];
        let r = select_regions(inputs, &cfg());
        let reasons: Vec<_> = r.iter().map(|r| r.exclusion_reason).collect();
        assert_eq!(
            reasons,
            vec![None, Some(ExclusionReason::LowReporting), Some(ExclusionReason::LowReporting), None, Some(ExclusionReason::LongGap)]
        );
        assert!(r.iter().all(|r| r.selected == r.exclusion_reason.is_none()));
    }

    #[test]
    fn top_twenty_outliers() {
        let inputs: Vec<_> = (0..100).map(|i| (key(i), metrics(1.0, 0, i + 1))).collect();
        let r = select_regions(inputs, &cfg());
        assert_eq!(r.iter().filter(|r| r.selected).count(), 80);
        assert!(r.iter().filter(|r| !r.selected).all(|r| r.outlier_count > 80));
    }

    #[test]
    fn ties_at_cut_are_all_excluded() {
        let mut inputs: Vec<_> = (0..100).map(|i| (key(i), metrics(1.0, 0, i + 1))).collect();
        // Ranks 20 and 21 share a count.
        inputs[79].1.outlier_count = 81;
        let r = select_regions(inputs, &cfg());
        assert_eq!(r.iter().filter(|r| r.selected).count(), 79);
    }

    #[test]
    fn csv_output() {
        let r = select_regions(vec![(key(1), metrics(0.5, 2, 3))], &cfg());
        let mut buf = Vec::new();
        write_screening_csv(&r, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "region,fraction,max_gap,outliers,selected,reason\nR001,0.5000,2,3,false,low_reporting\n"
        );
    }

    proptest! {
        #[test]
        fn deterministic(inputs in prop::collection::vec((0.0f64..1.0, 0usize..10, 0usize..50), 0..60)) {
            let make = || inputs.iter().enumerate().map(|(i, &(f, g, o))| (key(i), metrics(f, g, o))).collect::<Vec<_>>();
            let a = select_regions(make(), &cfg());
            let b = select_regions(make().into_iter().rev().collect(), &cfg());
            prop_assert_eq!(a, b);
        }

        #[test]
        fn removing_a_day_changes_flags_only_nearby(
            x in prop::collection::vec(0.0f64..100.0, 50..90),
            j in 0usize..50,
        ) {
            let c = cfg();
            let w = c.mad_window;
            let before = mad_outliers(&x, &c).unwrap();
            let mut y = x.clone();
            y.remove(j);
            let after = mad_outliers(&y, &c).unwrap();
            for (i, &flag) in before.iter().enumerate() {
                if i + w < j || i > j + w {
                    let k = if i < j { i } else { i - 1 };
                    prop_assert_eq!(flag, after[k], "index {}", i);
                }
            }
        }
    }
}
