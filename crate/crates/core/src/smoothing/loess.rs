use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoessConfig {
    /// Number of nearest observations in each local fit.
    pub span: usize,
    pub degree: usize,
    /// Optional per-point weights in `[0, 1]` multiplied into the tricube
    /// distance weights.
    pub robustness_weights: Option<Vec<f64>>,
}

impl LoessConfig {
    pub fn new(span: usize, degree: usize) -> Self {
        Self { span, degree, robustness_weights: None }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.robustness_weights = Some(weights);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoessFit {
    pub values: Vec<f64>,
    /// Indices where the local design was singular and the weighted window
    /// mean was used instead.
    pub fallback_points: Vec<usize>,
}

/// Tricube weights for observations `lo..=hi` around position `x`, with
/// bandwidth `h`. Points beyond `0.999 h` get weight 0; points within
/// `0.001 h` get weight 1.
fn tricube(x: f64, lo: usize, hi: usize, h: f64, rw: Option<&[f64]>, out: &mut Vec<f64>) -> f64 {
    out.clear();
    let (h9, h1) = (0.999 * h, 0.001 * h);
    let mut total = 0.0;
    for j in lo..=hi {
        let r = (j as f64 - x).abs();
        let mut w = if r <= h1 {
            1.0
        } else if r <= h9 {
            let u = r / h;
            let t = 1.0 - u * u * u;
            t * t * t
        } else {
            0.0
        };
        if let Some(rw) = rw {
            w *= rw[j];
        }
        total += w;
        out.push(w);
    }
    total
}

/// Local polynomial estimate at position `x` from `y[lo..=hi]`.
///
/// Degrees 0 and 1 follow the classic STL estimator: the degree-1 correction
/// is skipped when the weighted spread of the abscissae is negligible
/// relative to `range`. Returns `None` when every weight is zero, and
/// `Some((value, singular))` otherwise, where `singular` reports a degree-2
/// design that had to fall back to the weighted mean.
#[allow(clippy::too_many_arguments)]
pub(crate) fn local_fit(
    y: &[f64],
    rw: Option<&[f64]>,
    x: f64,
    lo: usize,
    hi: usize,
    h: f64,
    degree: usize,
    range: f64,
    scratch: &mut Vec<f64>,
) -> Option<(f64, bool)> {
    let total = tricube(x, lo, hi, h, rw, scratch);
    if total <= 0.0 {
        return None;
    }
    for w in scratch.iter_mut() {
        *w /= total;
    }
    let w = &scratch[..];
    let ys = &y[lo..=hi];

    if h <= 0.0 || degree == 0 {
        return Some((dot(w, ys), false));
    }

    let mean_x: f64 = w.iter().enumerate().map(|(k, wk)| wk * (lo + k) as f64).sum();
    let spread: f64 = w
        .iter()
        .enumerate()
        .map(|(k, wk)| {
            let d = (lo + k) as f64 - mean_x;
            wk * d * d
        })
        .sum();
    if spread.sqrt() <= 0.001 * range {
        return Some((dot(w, ys), degree >= 2));
    }

    if degree == 1 {
        let b = (x - mean_x) / spread;
        let v = w
            .iter()
            .zip(ys)
            .enumerate()
            .map(|(k, (wk, yk))| wk * (1.0 + b * ((lo + k) as f64 - mean_x)) * yk)
            .sum();
        return Some((v, false));
    }

    // Quadratic: weighted normal equations in coordinates centred on x.
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (k, (wk, yk)) in w.iter().zip(ys).enumerate() {
        let d = (lo + k) as f64 - x;
        let basis = [1.0, d, d * d];
        for r in 0..3 {
            rhs[r] += wk * basis[r] * yk;
            for c in 0..3 {
                m[r][c] += wk * basis[r] * basis[c];
            }
        }
    }
    match solve3(m, rhs) {
        Some(coef) => Some((coef[0], false)),
        None => Some((dot(w, ys), true)),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting; `None` when the system is
/// numerically singular.
fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() <= 1e-10 * scale {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for c in col..3 {
                m[row][c] -= f * m[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let s: f64 = (row + 1..3).map(|c| m[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    Some(x)
}

/// Nearest-neighbour window `[lo, hi]` of `span` points around `i`, shifted
/// inward at the series edges.
pub(crate) fn window(i: usize, span: usize, n: usize) -> (usize, usize) {
    if span >= n {
        return (0, n - 1);
    }
    let half = (span - 1) / 2;
    let lo = i.saturating_sub(half).min(n - span);
    (lo, lo + span - 1)
}

/// LOESS smoother evaluated at every observation.
pub fn loess_fit(y: &[f64], config: &LoessConfig) -> Result<LoessFit> {
    let n = y.len();
    if config.degree > 2 {
        return Err(Error::InvalidParameter(format!("LOESS degree {} not in 0..=2", config.degree)));
    }
    if config.span < config.degree + 2 {
        return Err(Error::InvalidParameter(format!(
            "LOESS span {} must be at least degree + 2",
            config.span
        )));
    }
    if config.span > n {
        return Err(Error::InvalidParameter(format!("LOESS span {} exceeds series length {n}", config.span)));
    }
    let rw = config.robustness_weights.as_deref();
    if let Some(rw) = rw {
        if rw.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: rw.len() });
        }
        if rw.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::InvalidParameter("robustness weights must lie in [0, 1]".into()));
        }
    }

    let range = (n - 1) as f64;
    let mut scratch = Vec::with_capacity(config.span);
    let mut values = Vec::with_capacity(n);
    let mut fallback_points = Vec::new();
    for i in 0..n {
        let (lo, hi) = window(i, config.span, n);
        let h = ((i - lo).max(hi - i)) as f64;
        match local_fit(y, rw, i as f64, lo, hi, h, config.degree, range, &mut scratch) {
            Some((v, singular)) => {
                if singular {
                    fallback_points.push(i);
                }
                values.push(v);
            }
            None => {
                // No usable weight: fall back to the distance-weighted mean,
                // or the plain mean if even that is degenerate.
                fallback_points.push(i);
                let v = match local_fit(y, None, i as f64, lo, hi, h, 0, range, &mut scratch) {
                    Some((v, _)) => v,
                    None => y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64,
                };
                values.push(v);
            }
        }
    }
    Ok(LoessFit { values, fallback_points })
}
