//! Flat key-value configuration file. Every tunable of the pipeline has
//! one key; absent keys keep their defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use chrono::NaiveDate;
use serde::Deserialize;
use trendcast::backtest::BacktestConfig;
use trendcast::par::Execution;
use trendcast::pipeline::{PipelineConfig, VintageMode};
use trendcast::probabilistic::TailModel;
use trendcast::screening::ScreeningConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // preprocess
    pub p_zero_threshold: f64,
    pub min_run_for_imputation: usize,
    // trend
    pub window_length: usize,
    pub outlier_weight_threshold: f64,
    pub period: usize,
    pub seasonal_span: usize,
    pub seasonal_degree: usize,
    pub trend_span: Option<usize>,
    pub trend_degree: usize,
    pub lowpass_span: Option<usize>,
    pub lowpass_degree: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    // forecast and quantiles
    pub slope_window: usize,
    pub horizon_days: usize,
    pub history_base_days: usize,
    pub min_history: usize,
    pub tail_model: TailModel,
    // evaluation
    pub wis_normalized: bool,
    pub bucket_width: f64,
    pub backtest_start: Option<NaiveDate>,
    pub backtest_end: Option<NaiveDate>,
    pub daily_horizons: Vec<u32>,
    pub weekly_horizons: Vec<u32>,
    pub vintage_mode: VintageMode,
    pub ground_truth: Option<PathBuf>,
    pub force_baseline: bool,
    // screening
    pub mad_window: usize,
    pub mad_threshold: f64,
    pub min_reporting_fraction: f64,
    pub max_gap_days: usize,
    pub n_exclude_outliers: usize,
    // execution
    pub execution: Execution,
}

impl Default for Config {
    fn default() -> Self {
        let p = PipelineConfig::default();
        let s = ScreeningConfig::default();
        Self {
            p_zero_threshold: p.preprocess.p_zero_threshold,
            min_run_for_imputation: p.preprocess.min_run_for_imputation,
            window_length: p.trend.window_length,
            outlier_weight_threshold: p.trend.outlier_weight_threshold,
            period: p.trend.stl.period,
            seasonal_span: p.trend.stl.seasonal_span,
            seasonal_degree: p.trend.stl.seasonal_degree,
            trend_span: p.trend.stl.trend_span,
            trend_degree: p.trend.stl.trend_degree,
            lowpass_span: p.trend.stl.lowpass_span,
            lowpass_degree: p.trend.stl.lowpass_degree,
            inner_iterations: p.trend.stl.inner_iterations,
            outer_iterations: p.trend.stl.outer_iterations,
            slope_window: p.forecast.slope_window,
            horizon_days: p.forecast.horizon_days,
            history_base_days: p.probabilistic.history_base_days,
            min_history: p.probabilistic.min_history,
            tail_model: p.probabilistic.tail_model,
            wis_normalized: false,
            bucket_width: 0.01,
            backtest_start: None,
            backtest_end: None,
            daily_horizons: Vec::new(),
            weekly_horizons: vec![1, 2],
            vintage_mode: VintageMode::AsOf,
            ground_truth: None,
            force_baseline: false,
            mad_window: s.mad_window,
            mad_threshold: s.mad_threshold,
            min_reporting_fraction: s.min_reporting_fraction,
            max_gap_days: s.max_gap_days,
            n_exclude_outliers: s.n_exclude_outliers,
            execution: Execution::Parallel,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig::default();
        p.preprocess.p_zero_threshold = self.p_zero_threshold;
        p.preprocess.min_run_for_imputation = self.min_run_for_imputation;
        p.trend.window_length = self.window_length;
        p.trend.outlier_weight_threshold = self.outlier_weight_threshold;
        let stl = &mut p.trend.stl;
        stl.period = self.period;
        stl.seasonal_span = self.seasonal_span;
        stl.seasonal_degree = self.seasonal_degree;
        stl.trend_span = self.trend_span;
        stl.trend_degree = self.trend_degree;
        stl.lowpass_span = self.lowpass_span;
        stl.lowpass_degree = self.lowpass_degree;
        stl.inner_iterations = self.inner_iterations;
        stl.outer_iterations = self.outer_iterations;
        p.forecast.slope_window = self.slope_window;
        p.forecast.horizon_days = self.horizon_days;
        p.probabilistic.history_base_days = self.history_base_days;
        p.probabilistic.min_history = self.min_history;
        p.probabilistic.tail_model = self.tail_model;
        p
    }

    pub fn screening(&self) -> ScreeningConfig {
        ScreeningConfig {
            mad_window: self.mad_window,
            mad_threshold: self.mad_threshold,
            min_reporting_fraction: self.min_reporting_fraction,
            max_gap_days: self.max_gap_days,
            n_exclude_outliers: self.n_exclude_outliers,
        }
    }

    pub fn backtest(&self) -> anyhow::Result<BacktestConfig> {
        let (Some(start), Some(end)) = (self.backtest_start, self.backtest_end) else {
            bail!("backtest needs backtest_start and backtest_end in the config or on the command line");
        };
        let mut b = BacktestConfig::new(start, end);
        b.daily_horizons = self.daily_horizons.clone();
        b.weekly_horizons = self.weekly_horizons.clone();
        b.vintage_mode = self.vintage_mode;
        b.force_baseline = self.force_baseline;
        b.bucket_width = self.bucket_width;
        Ok(b)
    }

    pub fn execution(&self) -> Execution {
        if Execution::parallel_available() {
            self.execution
        } else {
            Execution::Sequential
        }
    }
}
