//! Piecewise robust STL trend.
//!
//! Windows of length `L` are laid out backward from the last observation at
//! stride `L/2`. Each window is decomposed with robust STL, neighbouring
//! windows are joined on their overlap with a logistic weight, and the mass
//! that the trend does not account for is pushed into earlier observations
//! so that the finished trend sums to the observed total. Days the STL
//! robustness weights mark as outliers have their excess moved into the past
//! and the whole estimate is run a second time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::CleanSeries;
use crate::smoothing::{stl_decompose, StlParams};

const BLEND_SLOPE_NUMERATOR: f64 = 21.1;
const BLEND_OFFSET: f64 = 5.46;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrendConfig {
    /// Window length `L` in days (even).
    pub window_length: usize,
    /// Days whose final STL robustness weight falls below this are outliers.
    pub outlier_weight_threshold: f64,
    pub stl: StlParams,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self { window_length: 42, outlier_weight_threshold: 0.1, stl: StlParams::default() }
    }
}

impl TrendConfig {
    fn validate(&self) -> Result<()> {
        let l = self.window_length;
        if !l.is_multiple_of(2) || l / 2 < 2 * self.stl.period {
            return Err(Error::InvalidParameter(format!(
                "window length {l} must be even and at least four periods"
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_weight_threshold) {
            return Err(Error::InvalidParameter("outlier weight threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendEstimate {
    pub values: Vec<f64>,
    pub outlier_mask: Vec<bool>,
    pub window_length: usize,
    /// Set when the series was shorter than one window and a single STL fit
    /// (or a flat mean) was used.
    pub degenerate: bool,
}

/// Logistic join weight `1 / (1 + exp(a (tau - 1) - b))` with `a = 21.1 / L`,
/// `b = 5.46`, for `tau = 1..=L/2`.
pub fn blend_weight(tau: usize, window_length: usize) -> f64 {
    let a = BLEND_SLOPE_NUMERATOR / window_length as f64;
    1.0 / (1.0 + (a * (tau as f64 - 1.0) - BLEND_OFFSET).exp())
}

/// Join two estimates on their `L/2`-day overlap. `older` is the estimate
/// from the window that starts earlier; it dominates at the start of the
/// overlap and `newer` at the end.
pub fn blend_overlap(older: &[f64], newer: &[f64], window_length: usize) -> Result<Vec<f64>> {
    let half = window_length / 2;
    for s in [older, newer] {
        if s.len() != half {
            return Err(Error::LengthMismatch { expected: half, actual: s.len() });
        }
    }
    Ok(older
        .iter()
        .zip(newer)
        .enumerate()
        .map(|(i, (o, n))| {
            let w = blend_weight(i + 1, window_length);
            w * o + (1.0 - w) * n
        })
        .collect())
}

struct Pass {
    trend: Vec<f64>,
    /// Per-day minimum robustness weight over the windows covering it.
    weights: Vec<f64>,
}

fn stl_trend(x: &[f64], params: &StlParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = stl_decompose(x, params)?;
    Ok((d.trend.into_iter().map(|v| v.max(0.0)).collect(), d.robustness_weights))
}

/// Multiply `values` so they sum to `sum + extra`. Returns false when the
/// values carry no mass to scale.
fn inflate(values: &mut [f64], extra: f64) -> bool {
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return false;
    }
    let f = ((total + extra) / total).max(0.0);
    values.iter_mut().for_each(|v| *v *= f);
    true
}

fn single_window(x: &[f64], params: &StlParams) -> Result<Pass> {
    let n = x.len();
    let total: f64 = x.iter().sum();
    let (mut trend, weights) = if n >= 2 * params.period {
        stl_trend(x, params)?
    } else {
        (vec![total / n as f64; n], vec![1.0; n])
    };
    let current: f64 = trend.iter().sum();
    if !inflate(&mut trend, total - current) {
        trend.fill(total / n as f64);
    }
    Ok(Pass { trend, weights })
}

fn run_pass(x: &[f64], cfg: &TrendConfig) -> Result<Pass> {
    let n = x.len();
    let l = cfg.window_length;
    let half = l / 2;
    if n <= l {
        return single_window(x, &cfg.stl);
    }

    let mut work = x.to_vec();
    let mut trend = vec![0.0; n];
    let mut weights: Vec<f64> = vec![1.0; n];
    let raw_suffix = |from: usize| -> f64 { x[from..].iter().sum() };

    // Last window: match the raw count over its final L/2 days.
    let mut covered = n - l;
    let (mut s, w) = stl_trend(&work[covered..], &cfg.stl)?;
    let tail_raw = raw_suffix(n - half);
    let tail_est: f64 = s[half..].iter().sum();
    if tail_est > 0.0 {
        let f = tail_raw / tail_est;
        s.iter_mut().for_each(|v| *v *= f);
    } else {
        s.fill(tail_raw / half as f64);
    }
    let excess = raw_suffix(covered) - s.iter().sum::<f64>();
    trend[covered..].copy_from_slice(&s);
    for (dst, src) in weights[covered..].iter_mut().zip(&w) {
        *dst = dst.min(*src);
    }
    if excess > 0.0 {
        inflate(&mut work[..covered], excess);
    }

    let sigma: Vec<f64> = (1..=half).map(|tau| blend_weight(tau, l)).collect();
    while covered > 0 {
        let start = covered.saturating_sub(half);
        let end = covered + half;
        let (fresh, w) = stl_trend(&work[start..end], &cfg.stl)?;
        for (dst, src) in weights[start..end].iter_mut().zip(&w) {
            *dst = dst.min(*src);
        }
        let lead = covered - start;
        let kappa = raw_suffix(start);
        let rest: f64 = trend[end..].iter().sum();
        // Sum over the new span as a function of a scale f on the fresh
        // estimate: f * a + b.
        let a: f64 = fresh[..lead].iter().sum::<f64>()
            + (0..half).map(|i| sigma[i] * fresh[lead + i]).sum::<f64>();
        let b: f64 = (0..half).map(|i| (1.0 - sigma[i]) * trend[covered + i]).sum();
        let excess = kappa - (a + b + rest);
        let is_first = start == 0;

        let mut scale = 1.0;
        let mut push_back = false;
        if excess < 0.0 || is_first {
            if a > 0.0 {
                scale = ((kappa - b - rest) / a).max(0.0);
            }
        } else if excess > 0.0 {
            if work[..start].iter().sum::<f64>() > 0.0 {
                push_back = true;
            } else if a > 0.0 {
                scale = (kappa - b - rest) / a;
            }
        }

        for i in 0..lead {
            trend[start + i] = scale * fresh[i];
        }
        for i in 0..half {
            trend[covered + i] = sigma[i] * scale * fresh[lead + i] + (1.0 - sigma[i]) * trend[covered + i];
        }
        if a <= 0.0 && (is_first || excess > 0.0 && !push_back) {
            // Nothing to scale: spread the missing mass over the new days.
            let missing = kappa - b - rest;
            if missing > 0.0 && lead > 0 {
                trend[start..covered].fill(missing / lead as f64);
            }
        }
        if push_back {
            inflate(&mut work[..start], excess);
        }
        covered = start;
    }

    // Guard exact conservation against the rare cases the backward sweep
    // cannot satisfy locally.
    let total: f64 = x.iter().sum();
    let est: f64 = trend.iter().sum();
    if (est - total).abs() > 1e-12 * total.abs().max(1.0) {
        if est > 0.0 {
            let f = (total / est).max(0.0);
            trend.iter_mut().for_each(|v| *v *= f);
        } else {
            trend.fill(total.max(0.0) / n as f64);
        }
    }
    Ok(Pass { trend, weights })
}

/// Piecewise trend of the trusted part of a cleaned series.
pub fn estimate_piecewise_trend(series: &CleanSeries, cfg: &TrendConfig) -> Result<TrendEstimate> {
    estimate_trend(series.trusted(), cfg)
}

/// Piecewise trend of a dense non-negative series.
pub fn estimate_trend(x: &[f64], cfg: &TrendConfig) -> Result<TrendEstimate> {
    cfg.validate()?;
    let n = x.len();
    if n == 0 {
        return Err(Error::InsufficientHistory { needed: 1, available: 0 });
    }
    if x.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter("trend input must be finite and non-negative".into()));
    }
    let degenerate = n < cfg.window_length;
    if x.iter().all(|&v| v == 0.0) {
        return Ok(TrendEstimate {
            values: vec![0.0; n],
            outlier_mask: vec![false; n],
            window_length: cfg.window_length,
            degenerate,
        });
    }

    let first = run_pass(x, cfg)?;
    let outlier_mask: Vec<bool> = first.weights.iter().map(|&w| w < cfg.outlier_weight_threshold).collect();
    let values = if outlier_mask.iter().any(|&o| o) {
        let mut corrected = x.to_vec();
        for i in (0..n).filter(|&i| outlier_mask[i]) {
            let excess = corrected[i] - first.trend[i];
            if excess > 0.0 && i > 0 && inflate(&mut corrected[..i], excess) {
                corrected[i] = first.trend[i];
            }
        }
        run_pass(&corrected, cfg)?.trend
    } else {
        first.trend
    };

    Ok(TrendEstimate { values, outlier_mask, window_length: cfg.window_length, degenerate })
}
