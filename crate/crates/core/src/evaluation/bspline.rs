//! Cubic P-spline (B-spline basis with a second-difference penalty) whose
//! smoothing parameter is chosen by generalised cross-validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedSpline {
    knots: Vec<f64>,
    coef: Vec<f64>,
    pub lambda: f64,
    pub gcv: f64,
}

/// Values of every degree-`deg` basis function at `x`.
fn basis(knots: &[f64], deg: usize, x: f64) -> Vec<f64> {
    let m = knots.len() - 1;
    let mut b: Vec<f64> = (0..m).map(|j| f64::from(u8::from(knots[j] <= x && x < knots[j + 1]))).collect();
    for d in 1..=deg {
        for j in 0..m - d {
            let left = knots[j + d] - knots[j];
            let right = knots[j + d + 1] - knots[j + 1];
            let a = if left > 0.0 { (x - knots[j]) / left * b[j] } else { 0.0 };
            let c = if right > 0.0 { (knots[j + d + 1] - x) / right * b[j + 1] } else { 0.0 };
            b[j] = a + c;
        }
    }
    b.truncate(m - deg);
    b
}

impl PenalizedSpline {
    /// Fit with equally spaced knots `spacing` apart covering `x`. The grid
    /// of candidate smoothing parameters is `10^(-4..=6)` in quarter decades.
    pub fn fit(x: &[f64], y: &[f64], spacing: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch { expected: x.len(), actual: y.len() });
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter("knot spacing must be positive".into()));
        }
        let n = x.len();
        if n < DEGREE + 2 {
            return Err(Error::InsufficientHistory { needed: DEGREE + 2, available: n });
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let segments = (((hi - lo) / spacing).ceil() as usize).max(1);
        // Pad so that `hi` lies strictly inside the last segment.
        let knots: Vec<f64> =
            (0..=segments + 2 * DEGREE).map(|j| lo + (j as f64 - DEGREE as f64) * spacing).collect();
        let p = segments + DEGREE;

        let mut design = DMatrix::<f64>::zeros(n, p);
        for (i, &xi) in x.iter().enumerate() {
            for (j, v) in basis(&knots, DEGREE, xi.min(hi - 1e-12 * spacing)).into_iter().enumerate() {
                design[(i, j)] = v;
            }
        }
        let mut diff = DMatrix::<f64>::zeros(p.saturating_sub(2), p);
        for r in 0..p.saturating_sub(2) {
            diff[(r, r)] = 1.0;
            diff[(r, r + 1)] = -2.0;
            diff[(r, r + 2)] = 1.0;
        }
        let btb = design.transpose() * &design;
        let dtd = diff.transpose() * &diff;
        let yv = DVector::from_column_slice(y);
        let bty = design.transpose() * &yv;

        let mut best: Option<(f64, f64, DVector<f64>)> = None;
        for step in -16..=24 {
            let lambda = 10f64.powf(step as f64 / 4.0);
            let a = &btb + &dtd * lambda;
            let Some(chol) = a.cholesky() else { continue };
            let coef = chol.solve(&bty);
            let edf = chol.solve(&btb).trace();
            let rss = (&yv - &design * &coef).norm_squared();
            let denom = n as f64 - edf;
            if denom <= 0.0 {
                continue;
            }
            let gcv = n as f64 * rss / (denom * denom);
            if best.as_ref().is_none_or(|(g, _, _)| gcv < *g) {
                best = Some((gcv, lambda, coef));
            }
        }
        let (gcv, lambda, coef) =
            best.ok_or_else(|| Error::Undefined("no smoothing parameter gave a well-posed fit".into()))?;
        Ok(Self { knots, coef: coef.iter().copied().collect(), lambda, gcv })
    }

    fn support(&self) -> (f64, f64) {
        (self.knots[DEGREE], self.knots[self.knots.len() - 1 - DEGREE])
    }

    fn clamp(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        x.clamp(lo, hi - 1e-9 * (hi - lo))
    }

    pub fn value(&self, x: f64) -> f64 {
        basis(&self.knots, DEGREE, self.clamp(x)).iter().zip(&self.coef).map(|(b, c)| b * c).sum()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        // Uniform knots: B'_{j,3} = (B_{j,2} - B_{j+1,2}) / spacing.
        let lower = basis(&self.knots, DEGREE - 1, self.clamp(x));
        let h = self.knots[1] - self.knots[0];
        (0..self.coef.len())
            .map(|j| {
                let next = lower.get(j + 1).copied().unwrap_or(0.0);
                self.coef[j] * (lower[j] - next) / h
            })
            .sum()
    }

    /// Relative growth `s'(x) / s(x)`; `None` where the fit is not positive.
    pub fn growth_rate(&self, x: f64) -> Option<f64> {
        let v = self.value(x);
        (v > 0.0).then(|| self.derivative(x) / v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        let knots: Vec<f64> = (0..12).map(f64::from).collect();
        for i in 0..40 {
            let x = 3.0 + i as f64 * 0.12;
            let s: f64 = basis(&knots, 3, x).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_lines() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 5.0 + 2.0 * v).collect();
        let s = PenalizedSpline::fit(&x, &y, 3.0).unwrap();
        for &xi in &x {
            assert!((s.value(xi) - (5.0 + 2.0 * xi)).abs() < 1e-6);
            assert!((s.derivative(xi) - 2.0).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_has_zero_growth() {
        let x: Vec<f64> = (0..15).map(f64::from).collect();
        let s = PenalizedSpline::fit(&x, &[40.0; 15], 3.0).unwrap();
        for &xi in &x {
            assert!(s.growth_rate(xi).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn exponential_growth_rate() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|w| 100.0 * 1.05f64.powf(*w)).collect();
        let s = PenalizedSpline::fit(&x, &y, 3.0).unwrap();
        let target = 1.05f64.ln();
        for &xi in &x[3..27] {
            let g = s.growth_rate(xi).unwrap();
            assert!((g - target).abs() <= 0.2 * target, "x={xi} g={g}");
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let x: Vec<f64> = (0..25).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 50.0 + 30.0 * (v / 4.0).sin()).collect();
        let s = PenalizedSpline::fit(&x, &y, 3.0).unwrap();
        for xi in [2.3, 7.7, 12.1, 20.4] {
            let fd = (s.value(xi + 1e-5) - s.value(xi - 1e-5)) / 2e-5;
            assert!((fd - s.derivative(xi)).abs() < 1e-4);
        }
    }

    #[test]
    fn rejects_tiny_inputs() {
        assert!(PenalizedSpline::fit(&[0.0, 1.0], &[1.0, 2.0], 3.0).is_err());
        assert!(PenalizedSpline::fit(&[0.0, 1.0, 2.0], &[1.0, 2.0], 3.0).is_err());
    }
}
