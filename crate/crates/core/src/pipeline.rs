//! Per-origin forecasting: clean the data available at an origin, estimate
//! the trend, extrapolate, and attach quantiles learned from earlier
//! origins' errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{baseline_forecast, centered_mean, extrapolate, weekly_totals, ForecastConfig, PointForecast};
use crate::ingest::{DailySeries, RegionKey};
use crate::par::Execution;
use crate::piecewise::{estimate_trend, TrendConfig};
use crate::preprocess::{preprocess_pipeline, CleanSeries, PreprocessConfig};
use crate::probabilistic::{baseline_quantiles, quantile_forecast, ProbabilisticConfig, QuantileForecast, RetroPoint, Target};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub trend: TrendConfig,
    pub forecast: ForecastConfig,
    pub probabilistic: ProbabilisticConfig,
}

impl PipelineConfig {
    /// Calendar origins whose errors feed the quantiles of one origin.
    pub fn error_window(&self) -> usize {
        self.probabilistic.history_base_days + self.forecast.horizon_days
    }
}

/// How the data seen at each origin is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VintageMode {
    /// Clean only the days up to the origin.
    #[default]
    AsOf,
    /// Clean the full snapshot once, then cut it at each origin.
    Final,
}

/// Source of the series as known at an origin.
#[derive(Debug, Clone, Copy)]
pub enum Vintage<'a> {
    AsOf(&'a DailySeries),
    Final(&'a CleanSeries),
}

impl<'a> Vintage<'a> {
    pub fn new(series: &'a DailySeries, mode: VintageMode, cleaned: Option<&'a CleanSeries>) -> Result<Self> {
        match (mode, cleaned) {
            (VintageMode::AsOf, _) => Ok(Vintage::AsOf(series)),
            (VintageMode::Final, Some(c)) => Ok(Vintage::Final(c)),
            (VintageMode::Final, None) => Err(Error::InvalidParameter("final vintage needs the cleaned snapshot".into())),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Vintage::AsOf(s) => s.len(),
            Vintage::Final(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cleaned values known at origin `t` (days `0..=t`).
    pub fn at(&self, t: usize, cfg: &PreprocessConfig) -> CleanSeries {
        match self {
            Vintage::AsOf(s) => preprocess_pipeline(&s.truncated(t), cfg),
            Vintage::Final(c) => {
                let end = (t + 1).min(c.len());
                CleanSeries {
                    region: c.region.clone(),
                    start_date: c.start_date,
                    kind: c.kind,
                    values: c.values[..end].to_vec(),
                    forecast_anchor: c.forecast_anchor.min(end - 1),
                    provenance: c.provenance[..end].to_vec(),
                    notes: Vec::new(),
                }
            }
        }
    }
}

/// Method and baseline point forecasts made at one origin, together with
/// the cleaned history they were made from.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginPoint {
    pub origin: usize,
    /// Last trusted day at the origin; `origin - anchor` trailing days were
    /// dropped as not yet reported.
    pub anchor: usize,
    pub trend: Vec<f64>,
    pub method: PointForecast,
    pub baseline: PointForecast,
    /// Trusted cleaned values, days `0..=anchor`.
    pub observed: Vec<f64>,
}

/// Point forecasts for days `t+1 ..= t+H` from data up to origin `t`.
pub fn point_at(vintage: &Vintage<'_>, t: usize, cfg: &PipelineConfig) -> Result<OriginPoint> {
    if t >= vintage.len() {
        return Err(Error::InvalidParameter(format!("origin {t} beyond series of length {}", vintage.len())));
    }
    let clean = vintage.at(t, &cfg.preprocess);
    let anchor = clean.forecast_anchor;
    let observed = clean.trusted().to_vec();
    let horizon = cfg.forecast.horizon_days;
    let gap = t - anchor;

    let trend = estimate_trend(&observed, &cfg.trend)?;
    let mut method = extrapolate(&trend.values, anchor, horizon + gap, cfg.forecast.slope_window)?;
    method.values.drain(..gap);
    method.origin_index = t;
    let mut baseline = baseline_forecast(&observed, anchor, horizon)?;
    baseline.origin_index = t;
    Ok(OriginPoint { origin: t, anchor, trend: trend.values, method, baseline, observed })
}

/// Days after the origin needed before a target's truth is known.
pub fn target_lead(target: Target) -> usize {
    match target {
        Target::DailyMean(h) => h as usize + 3,
        Target::WeeklyTotal(k) => 7 * k as usize,
    }
}

/// Ground truth for `target` issued at origin `s`: the centred 7-day mean
/// for daily targets, the 7-day sum for weekly ones.
pub fn target_truth(values: &[f64], s: usize, target: Target) -> Option<f64> {
    match target {
        Target::DailyMean(h) => centered_mean(values, s + h as usize),
        Target::WeeklyTotal(k) => weekly_totals(values, s, k as usize).ok().map(|w| w.total),
    }
}

pub fn target_point(forecast: &PointForecast, target: Target) -> Option<f64> {
    match target {
        Target::DailyMean(h) => forecast.at(h as usize),
        Target::WeeklyTotal(k) => forecast.weekly_total(k as usize).ok().map(|w| w.total),
    }
}

/// Quantiles for the method and the baseline at `current`, from the
/// errors of earlier origins whose truth is already visible in
/// `current.observed`. `history` must be sorted by origin.
pub fn quantiles_at(
    current: &OriginPoint,
    history: &[OriginPoint],
    target: Target,
    cfg: &PipelineConfig,
) -> (Result<QuantileForecast>, Result<QuantileForecast>) {
    let obs = &current.observed;
    let window = cfg.error_window();
    let lead = target_lead(target);
    let last = (obs.len() - 1).checked_sub(lead);
    let mut retro = Vec::new();
    let mut base_errors = Vec::new();
    if let Some(last) = last {
        let first = (last + 1).saturating_sub(window);
        let lo = history.partition_point(|p| p.origin < first);
        for p in history[lo..].iter().take_while(|p| p.origin <= last) {
            let Some(truth) = target_truth(obs, p.origin, target) else { continue };
            if let Some(f) = target_point(&p.method, target) {
                retro.push(RetroPoint { forecast: f, observed: truth });
            }
            if let Some(b) = target_point(&p.baseline, target) {
                base_errors.push(truth - b);
            }
        }
    }
    let horizon = cfg.forecast.horizon_days;
    let method = target_point(&current.method, target)
        .ok_or_else(|| Error::InvalidParameter(format!("target {} beyond horizon {horizon}", target.label())))
        .and_then(|f| quantile_forecast(f, &retro, target, horizon, &cfg.probabilistic));
    let baseline = target_point(&current.baseline, target)
        .ok_or_else(|| Error::InvalidParameter(format!("target {} beyond horizon {horizon}", target.label())))
        .and_then(|b| baseline_quantiles(b, &base_errors, target, cfg.probabilistic.min_history));
    (method, baseline)
}

/// Point forecasts at each origin, in order; origins without enough
/// history yield `None`.
pub fn origin_points(
    vintage: &Vintage<'_>,
    origins: &[usize],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Vec<Option<OriginPoint>> {
    exec.map(origins, |&t| point_at(vintage, t, cfg).ok())
}

/// Earliest origin whose quantiles can use a full error window.
pub fn history_start(origin: usize, targets: &[Target], cfg: &PipelineConfig) -> usize {
    let lead = targets.iter().map(|&t| target_lead(t)).max().unwrap_or(0);
    origin.saturating_sub(cfg.error_window() + lead)
}

/// Forecast for one region at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionForecast {
    pub region: RegionKey,
    pub point: OriginPoint,
    pub quantiles: Vec<QuantileForecast>,
    pub baseline_quantiles: Vec<QuantileForecast>,
    /// Targets left without quantiles, with the reason.
    pub missing: Vec<(Target, String)>,
}

pub fn forecast_region(
    series: &DailySeries,
    origin: usize,
    targets: &[Target],
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<RegionForecast> {
    let vintage = Vintage::AsOf(series);
    let current = point_at(&vintage, origin, cfg)?;
    let past: Vec<usize> = (history_start(origin, targets, cfg)..origin).collect();
    let history: Vec<OriginPoint> = origin_points(&vintage, &past, cfg, exec).into_iter().flatten().collect();
    let mut out = RegionForecast {
        region: series.region.clone(),
        point: current, quantiles: Vec::new(), baseline_quantiles: Vec::new(), missing: Vec::new() };
    for &target in targets {
        let (m, b) = quantiles_at(&out.point, &history, target, cfg);
        match (m, b) {
            (Ok(m), Ok(b)) => {
                out.quantiles.push(m);
                out.baseline_quantiles.push(b);
            }
            (Err(e), _) | (_, Err(e)) => out.missing.push((target, e.to_string())),
        }
    }
    Ok(out)
}
