//! Trend extrapolation, weekly aggregation and the constant-week baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days of history the baseline requires up to and including the origin.
pub const BASELINE_MIN_HISTORY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastConfig {
    /// Days over which the most recent trend slope is measured.
    pub slope_window: usize,
    pub horizon_days: usize,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self { slope_window: 7, horizon_days: 14 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleMode {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointForecast {
    pub origin_index: usize,
    /// `values[h - 1]` is the forecast `h` days after the origin.
    pub values: Vec<f64>,
    pub scale_mode: ScaleMode,
}

impl PointForecast {
    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    /// Forecast `h` days ahead (`h >= 1`).
    pub fn at(&self, h: usize) -> Option<f64> {
        h.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }

    /// Weekly total `F_k` over days `7(k-1)+1 ..= 7k`.
    pub fn weekly_total(&self, k: usize) -> Result<WeeklyTarget> {
        check_week(k)?;
        if self.values.len() < 7 * k {
            return Err(Error::InsufficientHistory { needed: 7 * k, available: self.values.len() });
        }
        Ok(WeeklyTarget { week_index: k, total: self.values[7 * (k - 1)..7 * k].iter().sum() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeeklyTarget {
    pub week_index: usize,
    pub total: f64,
}

fn check_week(k: usize) -> Result<()> {
    if (1..=2).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("week index {k} not in {{1, 2}}")))
    }
}

/// Continue the trend from `anchor` for `horizon` days, keeping the slope
/// over the last `slope_window` days: linearly when the trend is rising or
/// flat, geometrically (linear in log scale) when it is falling.
pub fn extrapolate(trend: &[f64], anchor: usize, horizon: usize, slope_window: usize) -> Result<PointForecast> {
    if slope_window == 0 {
        return Err(Error::InvalidParameter("slope window must be positive".into()));
    }
    if anchor >= trend.len() {
        return Err(Error::InvalidParameter(format!("anchor {anchor} outside trend of length {}", trend.len())));
    }
    if anchor < slope_window {
        return Err(Error::InsufficientHistory { needed: slope_window + 1, available: anchor + 1 });
    }
    let last = trend[anchor];
    let before = trend[anchor - slope_window];
    let w = slope_window as f64;
    let slope = (last - before) / w;

    let (values, scale_mode) = if last <= 0.0 {
        (vec![0.0; horizon], if slope >= 0.0 { ScaleMode::Linear } else { ScaleMode::Log })
    } else if slope >= 0.0 {
        ((1..=horizon).map(|h| (last + slope * h as f64).max(0.0)).collect(), ScaleMode::Linear)
    } else if before > 0.0 {
        let ratio = (last / before).powf(1.0 / w);
        ((1..=horizon).map(|h| last * ratio.powi(h as i32)).collect(), ScaleMode::Log)
    } else {
        ((1..=horizon).map(|h| (last + slope * h as f64).max(0.0)).collect(), ScaleMode::Linear)
    };
    Ok(PointForecast { origin_index: anchor, values, scale_mode })
}

/// Observed weekly total `X` over days `t+7(k-1)+1 ..= t+7k`.
pub fn weekly_totals(daily: &[f64], t: usize, k: usize) -> Result<WeeklyTarget> {
    check_week(k)?;
    let end = t + 7 * k;
    if end >= daily.len() {
        return Err(Error::InsufficientHistory { needed: end + 1, available: daily.len() });
    }
    Ok(WeeklyTarget { week_index: k, total: daily[end - 6..=end].iter().sum() })
}

/// Centred 7-day mean `(1/7) * sum x[t-3..=t+3]`.
pub fn centered_mean(daily: &[f64], t: usize) -> Option<f64> {
    (t >= 3 && t + 3 < daily.len()).then(|| daily[t - 3..=t + 3].iter().sum::<f64>() / 7.0)
}

/// Mean of the 7 days ending at `t`.
pub fn trailing_mean(daily: &[f64], t: usize) -> Option<f64> {
    (t >= 6 && t < daily.len()).then(|| daily[t - 6..=t].iter().sum::<f64>() / 7.0)
}

/// Previous week's daily mean held constant over the horizon, so the
/// implied weekly total equals last week's total.
pub fn baseline_forecast(daily: &[f64], t: usize, horizon: usize) -> Result<PointForecast> {
    if t >= daily.len() {
        return Err(Error::InvalidParameter(format!("origin {t} outside series of length {}", daily.len())));
    }
    if t + 1 < BASELINE_MIN_HISTORY {
        return Err(Error::InsufficientHistory { needed: BASELINE_MIN_HISTORY, available: t + 1 });
    }
    let level = trailing_mean(daily, t).expect("history checked above");
    Ok(PointForecast { origin_index: t, values: vec![level; horizon], scale_mode: ScaleMode::Linear })
}
