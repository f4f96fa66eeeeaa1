//! Robust STL: iterated seasonal/trend LOESS smoothing with bisquare
//! robustness weights.
//!
//! The inner loop follows Cleveland et al.'s original procedure: cycle-
//! subseries smoothing (extended one period on each side), a low-pass filter
//! of three moving averages plus LOESS, and a trend LOESS on the
//! deseasonalised series. All smoothers evaluate every point (no jumps).

use serde::{Deserialize, Serialize};

use super::loess::local_fit;
use crate::error::{Error, Result};
use crate::stats::median_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StlParams {
    pub period: usize,
    /// Span of the cycle-subseries smoother, in cycles.
    pub seasonal_span: usize,
    pub seasonal_degree: usize,
    /// Trend span; `None` picks the smallest odd integer
    /// `>= 1.5 * period / (1 - 1.5 / seasonal_span)`.
    pub trend_span: Option<usize>,
    pub trend_degree: usize,
    /// Low-pass span; `None` picks the smallest odd integer `>= period`.
    pub lowpass_span: Option<usize>,
    pub lowpass_degree: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

impl Default for StlParams {
    fn default() -> Self {
        Self {
            period: 7,
            seasonal_span: 11,
            seasonal_degree: 1,
            trend_span: None,
            trend_degree: 1,
            lowpass_span: None,
            lowpass_degree: 1,
            inner_iterations: 2,
            outer_iterations: 5,
        }
    }
}

fn next_odd(x: usize) -> usize {
    if x.is_multiple_of(2) {
        x + 1
    } else {
        x
    }
}

impl StlParams {
    pub fn resolved_trend_span(&self) -> usize {
        self.trend_span.unwrap_or_else(|| {
            let ns = self.seasonal_span.max(2) as f64;
            let raw = 1.5 * self.period as f64 / (1.0 - 1.5 / ns);
            next_odd(raw.ceil().max(3.0) as usize)
        })
    }

    pub fn resolved_lowpass_span(&self) -> usize {
        self.lowpass_span.unwrap_or_else(|| next_odd(self.period.max(3)))
    }

    fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidParameter("STL period must be at least 1".into()));
        }
        if self.seasonal_span < 3 {
            return Err(Error::InvalidParameter("STL seasonal span must be at least 3".into()));
        }
        if [self.seasonal_degree, self.trend_degree, self.lowpass_degree].iter().any(|&d| d > 1) {
            return Err(Error::InvalidParameter("STL smoother degrees must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlDecomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    /// Bisquare weights computed from the final residuals (all 1 when no
    /// outer iterations are run).
    pub robustness_weights: Vec<f64>,
}

/// Bisquare robustness weights with scale `6 * median|r|`. A zero scale
/// gives all weights 1.
pub fn bisquare_weights(residuals: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let cmad = 6.0 * median_sorted(&abs);
    if cmad <= 0.0 || !cmad.is_finite() {
        return vec![1.0; residuals.len()];
    }
    let (c9, c1) = (0.999 * cmad, 0.001 * cmad);
    residuals
        .iter()
        .map(|r| {
            let r = r.abs();
            if r <= c1 {
                1.0
            } else if r <= c9 {
                let u = r / cmad;
                let t = 1.0 - u * u;
                t * t
            } else {
                0.0
            }
        })
        .collect()
}

/// LOESS smoothing of `y` at every position, STL style: when `span`
/// exceeds the length, the whole series is used and the bandwidth widened
/// by `(span - n) / 2`.
fn smooth(y: &[f64], span: usize, degree: usize, rw: Option<&[f64]>, out: &mut [f64], scratch: &mut Vec<f64>) {
    let n = y.len();
    if n < 2 {
        out[..n].copy_from_slice(y);
        return;
    }
    let range = (n - 1) as f64;
    for i in 0..n {
        let (lo, hi) = if span >= n {
            (0, n - 1)
        } else {
            let half = span.div_ceil(2);
            // Slide the window with i, anchored at the edges.
            let lo = (i + 1).saturating_sub(half).min(n - span);
            (lo, lo + span - 1)
        };
        let mut h = ((i - lo).max(hi - i)) as f64;
        if span > n {
            h += ((span - n) / 2) as f64;
        }
        out[i] = local_fit(y, rw, i as f64, lo, hi, h, degree, range, scratch)
            .map(|(v, _)| v)
            .unwrap_or(y[i]);
    }
}

/// Estimate at an arbitrary position (used to extend cycle-subseries by one
/// point past each end).
fn estimate_at(y: &[f64], span: usize, degree: usize, rw: Option<&[f64]>, x: f64, lo: usize, hi: usize, scratch: &mut Vec<f64>) -> Option<f64> {
    let n = y.len();
    let mut h = (x - lo as f64).max(hi as f64 - x);
    if span > n {
        h += ((span - n) / 2) as f64;
    }
    local_fit(y, rw, x, lo, hi, h, degree, (n - 1) as f64, scratch).map(|(v, _)| v)
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let n_out = x.len() + 1 - len;
    let mut out = Vec::with_capacity(n_out);
    let mut acc: f64 = x[..len].iter().sum();
    out.push(acc / len as f64);
    for j in len..x.len() {
        acc += x[j] - x[j - len];
        out.push(acc / len as f64);
    }
    out
}

struct Workspace {
    sub_y: Vec<f64>,
    sub_w: Vec<f64>,
    sub_fit: Vec<f64>,
    cycle: Vec<f64>,
    lowpass: Vec<f64>,
    detrended: Vec<f64>,
    scratch: Vec<f64>,
}

/// Cycle-subseries smoothing of `detrended` into `cycle` (length n + 2p).
fn smooth_cycles(detrended: &[f64], p: usize, params: &StlParams, rw: Option<&[f64]>, ws: &mut Workspace) {
    let n = detrended.len();
    let span = params.seasonal_span;
    for phase in 0..p {
        ws.sub_y.clear();
        ws.sub_w.clear();
        let mut idx = phase;
        while idx < n {
            ws.sub_y.push(detrended[idx]);
            if let Some(rw) = rw {
                ws.sub_w.push(rw[idx]);
            }
            idx += p;
        }
        let k = ws.sub_y.len();
        let sub_rw = rw.map(|_| ws.sub_w.as_slice());
        ws.sub_fit.resize(k + 2, 0.0);
        {
            let (_, inner) = ws.sub_fit.split_at_mut(1);
            smooth(&ws.sub_y, span, params.seasonal_degree, sub_rw, &mut inner[..k], &mut ws.scratch);
        }
        // Positions are 0-based here, so "one before the first" is -1 and
        // "one after the last" is k.
        let right = span.min(k) - 1;
        ws.sub_fit[0] = estimate_at(&ws.sub_y, span, params.seasonal_degree, sub_rw, -1.0, 0, right, &mut ws.scratch)
            .unwrap_or(ws.sub_fit[1]);
        let left = k.saturating_sub(span);
        ws.sub_fit[k + 1] = estimate_at(&ws.sub_y, span, params.seasonal_degree, sub_rw, k as f64, left, k - 1, &mut ws.scratch)
            .unwrap_or(ws.sub_fit[k]);
        for (m, v) in ws.sub_fit.iter().enumerate() {
            ws.cycle[m * p + phase] = *v;
        }
    }
}

fn inner_pass(
    y: &[f64],
    params: &StlParams,
    rw: Option<&[f64]>,
    trend: &mut [f64],
    seasonal: &mut [f64],
    ws: &mut Workspace,
) {
    let n = y.len();
    let p = params.period;
    let nt = params.resolved_trend_span();
    let nl = params.resolved_lowpass_span();
    for _ in 0..params.inner_iterations.max(1) {
        for i in 0..n {
            ws.detrended[i] = y[i] - trend[i];
        }
        if p == 1 {
            seasonal.fill(0.0);
        } else {
            ws.cycle.resize(n + 2 * p, 0.0);
            let detrended = std::mem::take(&mut ws.detrended);
            smooth_cycles(&detrended, p, params, rw, ws);
            ws.detrended = detrended;
            let ma = moving_average(&moving_average(&moving_average(&ws.cycle, p), p), 3);
            debug_assert_eq!(ma.len(), n);
            ws.lowpass.resize(n, 0.0);
            smooth(&ma, nl, params.lowpass_degree, None, &mut ws.lowpass, &mut ws.scratch);
            for ((s, c), l) in seasonal.iter_mut().zip(&ws.cycle[p..]).zip(&ws.lowpass) {
                *s = c - l;
            }
        }
        for i in 0..n {
            ws.detrended[i] = y[i] - seasonal[i];
        }
        smooth(&ws.detrended, nt, params.trend_degree, rw, trend, &mut ws.scratch);
    }
}

/// Robust STL decomposition of `y` with the given period.
pub fn stl_decompose(y: &[f64], params: &StlParams) -> Result<StlDecomposition> {
    params.validate()?;
    let n = y.len();
    let p = params.period;
    if n < 2 * p || n < 2 {
        return Err(Error::InsufficientHistory { needed: (2 * p).max(2), available: n });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("STL input must be finite".into()));
    }
    if y.iter().all(|&v| v == 0.0) {
        return Ok(StlDecomposition {
            trend: vec![0.0; n],
            seasonal: vec![0.0; n],
            residual: vec![0.0; n],
            robustness_weights: vec![1.0; n],
        });
    }

    let mut ws = Workspace {
        sub_y: Vec::new(),
        sub_w: Vec::new(),
        sub_fit: Vec::new(),
        cycle: Vec::with_capacity(n + 2 * p),
        lowpass: Vec::with_capacity(n),
        detrended: vec![0.0; n],
        scratch: Vec::new(),
    };
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut weights: Option<Vec<f64>> = None;
    let mut fitted = vec![0.0; n];

    for outer in 0..=params.outer_iterations {
        inner_pass(y, params, weights.as_deref(), &mut trend, &mut seasonal, &mut ws);
        if outer == params.outer_iterations {
            break;
        }
        for i in 0..n {
            fitted[i] = y[i] - trend[i] - seasonal[i];
        }
        weights = Some(bisquare_weights(&fitted));
    }

    let residual: Vec<f64> = (0..n).map(|i| y[i] - trend[i] - seasonal[i]).collect();
    let robustness_weights = if params.outer_iterations > 0 {
        bisquare_weights(&residual)
    } else {
        vec![1.0; n]
    };
    Ok(StlDecomposition { trend, seasonal, residual, robustness_weights })
}
