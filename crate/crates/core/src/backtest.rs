//! Rolling-origin evaluation of the method against the constant-week
//! baseline, per region and pooled across regions.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    absolute_error, aggregate_scores, growth_rate_stratification, relative_scores, total_coverage, wis,
    GrowthInput, GrowthOrigin, OriginScore, RelativeScores, ScoreSet, StratificationTable,
};
use crate::ingest::{DailySeries, RegionKey};
use crate::par::Execution;
use crate::pipeline::{
    history_start, origin_points, quantiles_at, target_truth, OriginPoint, PipelineConfig, Vintage, VintageMode,
};
use crate::preprocess::preprocess_pipeline;
use crate::probabilistic::{QuantileForecast, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    #[serde(default)]
    pub daily_horizons: Vec<u32>,
    #[serde(default = "default_weekly")]
    pub weekly_horizons: Vec<u32>,
    #[serde(default)]
    pub vintage_mode: VintageMode,
    /// Score the baseline against itself; every relative score is then 0.
    #[serde(default)]
    pub force_baseline: bool,
    /// Growth-rate bucket width for the stratification table.
    #[serde(default = "default_bucket")]
    pub bucket_width: f64,
}

fn default_weekly() -> Vec<u32> {
    vec![1, 2]
}

fn default_bucket() -> f64 {
    0.01
}

impl BacktestConfig {
    pub fn new(start_date: NaiveDate, end_date: NaiveDate) -> Self {
        Self {
            start_date,
            end_date,
            daily_horizons: Vec::new(),
            weekly_horizons: default_weekly(),
            vintage_mode: VintageMode::AsOf,
            force_baseline: false,
            bucket_width: default_bucket(),
        }
    }

    pub fn targets(&self) -> Vec<Target> {
        let mut t: Vec<Target> = self.daily_horizons.iter().map(|&h| Target::DailyMean(h)).collect();
        t.extend(self.weekly_horizons.iter().map(|&k| Target::WeeklyTotal(k)));
        t
    }

    pub fn validate(&self, pipeline: &PipelineConfig) -> Result<()> {
        if self.start_date >= self.end_date {
            return Err(Error::InvalidParameter("backtest start must precede its end".into()));
        }
        if self.daily_horizons.is_empty() && self.weekly_horizons.is_empty() {
            return Err(Error::InvalidParameter("backtest needs at least one horizon".into()));
        }
        let h_max = pipeline.forecast.horizon_days.min(14) as u32;
        if let Some(h) = self.daily_horizons.iter().find(|&&h| h == 0 || h > h_max) {
            return Err(Error::InvalidParameter(format!("daily horizon {h} not in 1..={h_max}")));
        }
        if let Some(k) = self.weekly_horizons.iter().find(|&&k| !(1..=2).contains(&k) || 7 * k > h_max) {
            return Err(Error::InvalidParameter(format!("weekly horizon {k} not supported")));
        }
        if !(self.bucket_width > 0.0) {
            return Err(Error::InvalidParameter("bucket width must be positive".into()));
        }
        Ok(())
    }
}

/// One origin scored against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOrigin {
    pub origin: usize,
    pub truth: f64,
    pub method: QuantileForecast,
    pub baseline: QuantileForecast,
}

impl ScoredOrigin {
    fn score(q: &QuantileForecast, truth: f64) -> Result<OriginScore> {
        Ok(OriginScore { ae: absolute_error(q.point, truth), wis: wis(q, truth)?, coverage: total_coverage(q, truth) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetEvaluation {
    pub target: Target,
    pub origins: Vec<ScoredOrigin>,
    pub method: Option<ScoreSet>,
    pub baseline: Option<ScoreSet>,
    pub relative: Option<RelativeScores>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionBacktest {
    pub region: RegionKey,
    pub targets: Vec<TargetEvaluation>,
    /// Origins in range where at least one target could not be scored.
    pub skipped_origins: usize,
    pub growth: Option<GrowthInput>,
}

impl RegionBacktest {
    pub fn target(&self, target: Target) -> Option<&TargetEvaluation> {
        self.targets.iter().find(|t| t.target == target)
    }
}

/// Ground-truth values on the series' day axis; days before the truth
/// snapshot starts are NaN.
fn aligned_truth(series: &DailySeries, truth: &DailySeries) -> Result<Vec<f64>> {
    let offset = (series.start_date - truth.start_date).num_days();
    if offset < 0 {
        return Err(Error::InvalidParameter(format!(
            "ground truth for {} starts after the forecast data",
            truth.region
        )));
    }
    let clean = preprocess_pipeline(truth, &Default::default());
    let trusted = clean.trusted();
    Ok(trusted.iter().skip(offset as usize).copied().collect())
}

fn weekly_growth_input(region: &RegionKey, truth: &[f64], origins: &[(usize, f64, f64, f64)]) -> GrowthInput {
    let weekly: Vec<f64> = truth.chunks_exact(7).map(|w| w.iter().sum()).collect();
    let origins = origins
        .iter()
        .filter(|(_, x, _, _)| *x > 0.0)
        .map(|&(t, x, m, b)| GrowthOrigin {
            // Week j is centred on day 7j + 3.
            week_position: (t as f64 - 3.0) / 7.0,
            method_ape: absolute_error(m, x) / x,
            baseline_ape: absolute_error(b, x) / x,
        })
        .collect();
    GrowthInput { region: region.id(), weekly, origins }
}

/// Rolling-origin backtest of one region. `truth` is the ground-truth
/// snapshot; it may be the same series as `series`.
pub fn backtest_region(
    series: &DailySeries,
    truth: &DailySeries,
    cfg: &BacktestConfig,
    pipeline: &PipelineConfig,
    exec: Execution,
) -> Result<RegionBacktest> {
    cfg.validate(pipeline)?;
    if series.is_empty() || series.end_date() < cfg.start_date || series.start_date > cfg.end_date {
        return Err(Error::InsufficientHistory { needed: 1, available: 0 });
    }
    let first = series.index_of(cfg.start_date).unwrap_or(0);
    let last = series.index_of(cfg.end_date).unwrap_or(series.len() - 1);
    let targets = cfg.targets();
    let truth_values = aligned_truth(series, truth)?;

    let cleaned = (cfg.vintage_mode == VintageMode::Final).then(|| preprocess_pipeline(series, &pipeline.preprocess));
    let vintage = Vintage::new(series, cfg.vintage_mode, cleaned.as_ref())?;
    let all: Vec<usize> = (history_start(first, &targets, pipeline)..=last).collect();
    let history: Vec<OriginPoint> = origin_points(&vintage, &all, pipeline, exec).into_iter().flatten().collect();

    let in_range: Vec<&OriginPoint> = history.iter().filter(|p| p.origin >= first).collect();
    let per_origin: Vec<Vec<Option<ScoredOrigin>>> = exec.map(&in_range, |current| {
        let before = &history[..history.partition_point(|p| p.origin < current.origin)];
        targets
            .iter()
            .map(|&target| {
                let truth = target_truth(&truth_values, current.origin, target).filter(|v| v.is_finite())?;
                let (m, b) = quantiles_at(current, before, target, pipeline);
                let b = b.ok()?;
                let m = if cfg.force_baseline { b.clone() } else { m.ok()? };
                Some(ScoredOrigin { origin: current.origin, truth, method: m, baseline: b })
            })
            .collect()
    });

    let in_range_total = last + 1 - first;
    let complete = per_origin.iter().filter(|o| o.iter().all(Option::is_some)).count();
    let mut evaluations = Vec::with_capacity(targets.len());
    for (i, &target) in targets.iter().enumerate() {
        let origins: Vec<ScoredOrigin> = per_origin.iter().filter_map(|o| o[i].clone()).collect();
        let score = |pick: fn(&ScoredOrigin) -> &QuantileForecast| -> Result<Option<ScoreSet>> {
            if origins.is_empty() {
                return Ok(None);
            }
            let recs = origins.iter().map(|o| ScoredOrigin::score(pick(o), o.truth)).collect::<Result<Vec<_>>>()?;
            aggregate_scores(&recs).map(Some)
        };
        let method = score(|o| &o.method)?;
        let baseline = score(|o| &o.baseline)?;
        let relative = method.zip(baseline).map(|(m, b)| relative_scores(&m, &b));
        evaluations.push(TargetEvaluation { target, origins, method, baseline, relative });
    }

    let growth = evaluations.iter().find(|e| matches!(e.target, Target::WeeklyTotal(1))).map(|e| {
        let rows: Vec<_> = e.origins.iter().map(|o| (o.origin, o.truth, o.method.point, o.baseline.point)).collect();
        let finite_end = truth_values.iter().position(|v| !v.is_finite()).unwrap_or(truth_values.len());
        weekly_growth_input(&series.region, &truth_values[..finite_end], &rows)
    });

    Ok(RegionBacktest {
        region: series.region.clone(),
        targets: evaluations,
        skipped_origins: in_range_total - complete,
        growth,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub regions: Vec<RegionBacktest>,
    /// Regions that could not be evaluated at all.
    pub failures: Vec<(RegionKey, String)>,
    pub stratification: StratificationTable,
}

/// Backtest every `(series, truth)` pair; results are ordered by region.
pub fn backtest_panel(
    panel: &[(DailySeries, DailySeries)],
    cfg: &BacktestConfig,
    pipeline: &PipelineConfig,
    exec: Execution,
) -> Result<EvaluationReport> {
    cfg.validate(pipeline)?;
    let results = exec.map(panel, |(s, t)| (s.region.clone(), backtest_region(s, t, cfg, pipeline, exec)));
    let mut regions = Vec::new();
    let mut failures = Vec::new();
    for (key, r) in results {
        match r {
            Ok(r) => regions.push(r),
            Err(e) => failures.push((key, e.to_string())),
        }
    }
    regions.sort_by(|a, b| a.region.cmp(&b.region));
    failures.sort_by(|a, b| a.0.cmp(&b.0));
    let growth: Vec<GrowthInput> = regions.iter().filter_map(|r| r.growth.clone()).collect();
    let stratification = growth_rate_stratification(&growth, cfg.bucket_width)?;
    Ok(EvaluationReport { regions, failures, stratification })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-region scores as `region,metric,method,baseline,relative`.
pub fn write_scores_csv<W: Write>(report: &EvaluationReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region", "metric", "method", "baseline", "relative"])?;
    for r in &report.regions {
        for e in &r.targets {
            let (Some(m), Some(b)) = (e.method, e.baseline) else { continue };
            let rel = e.relative.unwrap_or(RelativeScores { rmae: None, rmedian_ae: None, rwis: None, rc: None });
            let label = e.target.label();
            let rows = [
                ("mae", m.mae, b.mae, rel.rmae),
                ("median_ae", m.median_ae, b.median_ae, rel.rmedian_ae),
                ("mwis", m.mwis, b.mwis, rel.rwis),
                ("coverage", m.mean_total_coverage, b.mean_total_coverage, rel.rc),
            ];
            for (metric, mv, bv, rv) in rows {
                w.write_record([r.region.id(), format!("{label}_{metric}"), format!("{mv:.6}"), format!("{bv:.6}"), fmt_opt(rv)])?;
            }
            w.write_record([r.region.id(), format!("{label}_n_origins"), m.n_origins.to_string(), b.n_origins.to_string(), String::new()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SeriesKind;

    fn day(offset: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap() + chrono::Duration::days(offset)
    }

    fn series(name: &str, values: &[f64]) -> DailySeries {
        DailySeries::from_values(RegionKey::new(name).unwrap(), day(0), values, SeriesKind::Cases).unwrap()
    }

    /// Exponential level with a weekly pattern and deterministic jitter.
    fn wavy(n: usize, growth: f64) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let weekly = 1.0 + 0.2 * ((i % 7) as f64 - 3.0) / 3.0;
                let jitter = 1.0 + 0.08 * (((i * 7919) % 13) as f64 - 6.0) / 6.0;
                (100.0 * (growth * i as f64).exp() * weekly * jitter).round()
            })
            .collect()
    }

    #[test]
    fn forced_baseline_is_neutral() {
        let s = series("A", &wavy(200, 0.01));
        let mut cfg = BacktestConfig::new(day(120), day(170));
        cfg.force_baseline = true;
        let r = backtest_region(&s, &s, &cfg, &PipelineConfig::default(), Execution::Sequential).unwrap();
        for e in &r.targets {
            let rel = e.relative.unwrap();
            assert_eq!((rel.rmae, rel.rwis, rel.rc), (Some(0.0), Some(0.0), Some(0.0)));
        }
    }

    #[test]
    fn rising_series_beats_baseline() {
        let s = series("A", &wavy(220, 0.02));
        let cfg = BacktestConfig::new(day(120), day(190));
        let r = backtest_region(&s, &s, &cfg, &PipelineConfig::default(), Execution::Sequential).unwrap();
        let wk1 = r.target(Target::WeeklyTotal(1)).unwrap();
        assert!(wk1.origins.len() > 50);
        assert!(wk1.relative.unwrap().rmae.unwrap() > 0.5);
    }

    #[test]
    fn sequential_and_parallel_match() {
        let panel = vec![
            (series("B", &wavy(180, 0.01)), series("B", &wavy(180, 0.01))),
            (series("A", &wavy(180, -0.005)), series("A", &wavy(180, -0.005))),
        ];
        let mut cfg = BacktestConfig::new(day(110), day(160));
        cfg.daily_horizons = vec![7];
        let p = PipelineConfig::default();
        let a = backtest_panel(&panel, &cfg, &p, Execution::Sequential).unwrap();
        let b = backtest_panel(&panel, &cfg, &p, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.regions[0].region.id(), "A");
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_scores_csv(&a, &mut x).unwrap();
        write_scores_csv(&b, &mut y).unwrap();
        assert_eq!(x, y);
        assert!(String::from_utf8(x).unwrap().contains("A,wk1_mwis,"));
    }

    #[test]
    fn final_mode_runs() {
        let s = series("A", &wavy(180, 0.01));
        let mut cfg = BacktestConfig::new(day(110), day(160));
        cfg.vintage_mode = VintageMode::Final;
        let r = backtest_region(&s, &s, &cfg, &PipelineConfig::default(), Execution::Sequential).unwrap();
        assert!(r.target(Target::WeeklyTotal(1)).unwrap().method.is_some());
    }

    #[test]
    fn config_validation() {
        let p = PipelineConfig::default();
        assert!(BacktestConfig::new(day(10), day(5)).validate(&p).is_err());
        let mut c = BacktestConfig::new(day(0), day(5));
        c.weekly_horizons = vec![3];
        assert!(c.validate(&p).is_err());
        c.weekly_horizons.clear();
        assert!(c.validate(&p).is_err());
        c.daily_horizons = vec![15];
        assert!(c.validate(&p).is_err());
    }
}
