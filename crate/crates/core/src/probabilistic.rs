//! Predictive quantiles from retrospective forecast errors.
//!
//! Past errors are scaled by `sqrt(f)` (a Poisson-motivated variance model),
//! their empirical quantiles are centred so the median error is zero, the
//! four extreme levels come from an exponential tail fit, and the result is
//! mapped back as `q = f + q_scaled * sqrt(f)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::quantiles;

/// The 23 hub quantile levels.
pub const QUANTILE_LEVELS: [f64; 23] = [
    0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85,
    0.9, 0.95, 0.975, 0.99,
];

/// The 19 levels estimated directly from data (0.05, 0.10, ..., 0.95).
pub const INTERIOR_LEVELS: [f64; 19] = [
    0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
];

pub const MEDIAN_INDEX: usize = 11;
const INTERIOR_MEDIAN_INDEX: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    /// Centred 7-day mean of daily counts, `h` days after the origin.
    DailyMean(u32),
    /// Total over days `7(k-1)+1 ..= 7k` after the origin.
    WeeklyTotal(u32),
}

impl Target {
    /// Short label used in score tables, e.g. `d7` or `wk1`.
    pub fn label(&self) -> String {
        match self {
            Target::DailyMean(h) => format!("d{h}"),
            Target::WeeklyTotal(k) => format!("wk{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    pub target: Target,
    /// One value per entry of [`QUANTILE_LEVELS`].
    pub quantiles: Vec<f64>,
    pub point: f64,
}

impl QuantileForecast {
    pub fn new(target: Target, quantiles: Vec<f64>, point: f64) -> Result<Self> {
        let fc = Self { target, quantiles, point };
        fc.check_integrity()?;
        Ok(fc)
    }

    /// Hard invariants: 23 finite, non-negative, non-decreasing quantiles
    /// whose median equals the point forecast.
    pub fn check_integrity(&self) -> Result<()> {
        if self.quantiles.len() != QUANTILE_LEVELS.len() {
            return Err(Error::Integrity(format!("expected 23 quantiles, got {}", self.quantiles.len())));
        }
        if let Some(q) = self.quantiles.iter().find(|q| !q.is_finite() || **q < 0.0) {
            return Err(Error::Integrity(format!("quantile value {q} is negative or not finite")));
        }
        if !(self.point.is_finite() && self.point >= 0.0) {
            return Err(Error::Integrity(format!("point value {} is negative or not finite", self.point)));
        }
        if self.quantiles.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Integrity("quantiles are not monotone in level".into()));
        }
        if self.quantiles[MEDIAN_INDEX] != self.point {
            return Err(Error::Integrity("median quantile differs from the point forecast".into()));
        }
        Ok(())
    }

    pub fn median(&self) -> f64 {
        self.quantiles[MEDIAN_INDEX]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    /// Scale from the two outermost interior quantiles on each side.
    TwoPoint,
    /// Least-squares scale over the four outermost interior quantiles on
    /// each side, anchored at the 0.05 / 0.95 quantile.
    LeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbabilisticConfig {
    /// Error history spans `history_base_days + horizon_days` origins.
    pub history_base_days: usize,
    pub min_history: usize,
    pub tail_model: TailModel,
}

impl Default for ProbabilisticConfig {
    fn default() -> Self {
        Self { history_base_days: 40, min_history: 15, tail_model: TailModel::TwoPoint }
    }
}

/// A past forecast paired with the value it tried to predict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetroPoint {
    pub forecast: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledErrorHistory {
    pub target: Target,
    /// `(observed - forecast) / sqrt(forecast)`, oldest first.
    pub errors: Vec<f64>,
    pub window: usize,
    /// Origins in the window dropped because their forecast was zero.
    pub skipped: usize,
}

/// Scaled errors over the most recent `window` retrospective origins
/// (`retro` is ordered oldest first).
pub fn collect_scaled_errors(
    retro: &[RetroPoint],
    target: Target,
    window: usize,
    min_history: usize,
) -> Result<ScaledErrorHistory> {
    let recent = &retro[retro.len().saturating_sub(window)..];
    let mut errors = Vec::with_capacity(recent.len());
    let mut skipped = 0;
    for p in recent {
        if p.forecast > 0.0 && p.forecast.is_finite() && p.observed.is_finite() {
            errors.push((p.observed - p.forecast) / p.forecast.sqrt());
        } else {
            skipped += 1;
        }
    }
    if errors.len() < min_history {
        return Err(Error::InsufficientHistory { needed: min_history, available: errors.len() });
    }
    Ok(ScaledErrorHistory { target, errors, window, skipped })
}

/// Type-7 quantiles at the 19 interior levels, shifted so the median is 0.
pub fn estimate_interior_quantiles(history: &ScaledErrorHistory) -> Result<[f64; 19]> {
    let q = quantiles(&history.errors, &INTERIOR_LEVELS)
        .ok_or(Error::InsufficientHistory { needed: 1, available: 0 })?;
    let shift = q[INTERIOR_MEDIAN_INDEX];
    let mut out = [0.0; 19];
    for (o, v) in out.iter_mut().zip(&q) {
        *o = v - shift;
    }
    out[INTERIOR_MEDIAN_INDEX] = 0.0;
    Ok(out)
}

/// Exponential tail model: `q(1-a) = q(0.95) + theta * ln(0.05 / a)` above,
/// mirrored below. Returns the quantiles at 0.01, 0.025, 0.975 and 0.99.
pub fn extrapolate_tails(interior: &[f64; 19], model: TailModel) -> [f64; 4] {
    let lo = interior[0];
    let hi = interior[18];
    // Gaps from the outermost quantile inward, paired with ln(a / 0.05)
    // for a = 0.10, 0.15, 0.20.
    let (theta_lo, theta_hi) = match model {
        TailModel::TwoPoint => {
            let l = std::f64::consts::LN_2;
            ((interior[1] - lo) / l, (hi - interior[17]) / l)
        }
        TailModel::LeastSquares => {
            let mut num_lo = 0.0;
            let mut num_hi = 0.0;
            let mut den = 0.0;
            for j in 1..=3 {
                let l = (0.05 * (j + 1) as f64 / 0.05).ln();
                num_lo += (interior[j] - lo) * l;
                num_hi += (hi - interior[18 - j]) * l;
                den += l * l;
            }
            (num_lo / den, num_hi / den)
        }
    };
    let (theta_lo, theta_hi) = (theta_lo.max(0.0), theta_hi.max(0.0));
    let ext = |a: f64| (0.05 / a).ln();
    [
        lo - theta_lo * ext(0.01),
        lo - theta_lo * ext(0.025),
        hi + theta_hi * ext(0.025),
        hi + theta_hi * ext(0.01),
    ]
}

/// All 23 scaled quantiles from the interior estimate and the tail model.
pub fn scaled_quantiles(interior: &[f64; 19], model: TailModel) -> [f64; 23] {
    let tails = extrapolate_tails(interior, model);
    let mut out = [0.0; 23];
    out[0] = tails[0];
    out[1] = tails[1];
    out[2..21].copy_from_slice(interior);
    out[21] = tails[2];
    out[22] = tails[3];
    out
}

/// `q = max(0, f + q_scaled * sqrt(f))`, with the median pinned to `f`.
pub fn assemble_quantile_forecast(point: f64, scaled: &[f64; 23], target: Target) -> Result<QuantileForecast> {
    if !(point.is_finite() && point >= 0.0) {
        return Err(Error::Integrity(format!("point forecast {point} must be finite and non-negative")));
    }
    if scaled.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Integrity("scaled quantiles are not monotone".into()));
    }
    let root = point.sqrt();
    let mut q: Vec<f64> = scaled.iter().map(|s| (point + s * root).max(0.0)).collect();
    q[MEDIAN_INDEX] = point;
    QuantileForecast::new(target, q, point)
}

/// Full quantile forecast for one target from its retrospective record.
/// Works identically for daily-mean and weekly-total targets; for weekly
/// targets only `k` in `{1, 2}` is accepted.
pub fn quantile_forecast(
    point: f64,
    retro: &[RetroPoint],
    target: Target,
    horizon_days: usize,
    config: &ProbabilisticConfig,
) -> Result<QuantileForecast> {
    if let Target::WeeklyTotal(k) = target {
        if !(1..=2).contains(&k) {
            return Err(Error::InvalidParameter(format!("weekly target k={k} not in {{1, 2}}")));
        }
    }
    let window = config.history_base_days + horizon_days;
    let history = collect_scaled_errors(retro, target, window, config.min_history)?;
    let interior = estimate_interior_quantiles(&history)?;
    assemble_quantile_forecast(point, &scaled_quantiles(&interior, config.tail_model), target)
}

/// Baseline intervals: quantiles of the symmetrised past baseline errors
/// `{e} ∪ {-e}` added to the baseline point, floored at zero.
pub fn baseline_quantiles(
    point: f64,
    past_errors: &[f64],
    target: Target,
    min_history: usize,
) -> Result<QuantileForecast> {
    let errors: Vec<f64> = past_errors.iter().copied().filter(|e| e.is_finite()).collect();
    if errors.len() < min_history.max(1) {
        return Err(Error::InsufficientHistory { needed: min_history.max(1), available: errors.len() });
    }
    let symmetric: Vec<f64> = errors.iter().flat_map(|&e| [e, -e]).collect();
    let q = quantiles(&symmetric, &QUANTILE_LEVELS).expect("non-empty");
    let mut values: Vec<f64> = q.iter().map(|d| (point + d).max(0.0)).collect();
    values[MEDIAN_INDEX] = point;
    QuantileForecast::new(target, values, point)
}
