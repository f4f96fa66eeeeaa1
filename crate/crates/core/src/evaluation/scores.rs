use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probabilistic::{QuantileForecast, MEDIAN_INDEX, QUANTILE_LEVELS};
use crate::stats::median;

/// Number of central intervals in a 23-quantile forecast.
pub const K_INTERVALS: usize = 11;

/// Lower levels `alpha_k` of the nested intervals `[q_k, q_{24-k}]`.
pub const WIS_LEVELS: [f64; K_INTERVALS] = [0.01, 0.025, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];

pub fn absolute_error(forecast: f64, observed: f64) -> f64 {
    (forecast - observed).abs()
}

/// Interval score of `[lower, upper]` at level `alpha` for observation `obs`.
pub fn interval_score(lower: f64, upper: f64, alpha: f64, obs: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::InvalidParameter(format!("interval lower bound {lower} exceeds upper {upper}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("interval level {alpha} not in (0, 1)")));
    }
    let mut score = upper - lower;
    if obs < lower {
        score += 2.0 / alpha * (lower - obs);
    } else if obs > upper {
        score += 2.0 / alpha * (obs - upper);
    }
    Ok(score)
}

fn check_monotone(q: &QuantileForecast) -> Result<()> {
    if q.quantiles.len() != QUANTILE_LEVELS.len() || q.quantiles.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Integrity("quantiles must be 23 non-decreasing values".into()));
    }
    Ok(())
}

/// Weighted interval score `|obs - q_0.5| + sum_k alpha_k IS_{2 alpha_k}`,
/// without a normalising constant.
pub fn wis(q: &QuantileForecast, obs: f64) -> Result<f64> {
    check_monotone(q)?;
    let v = &q.quantiles;
    let mut total = (obs - v[MEDIAN_INDEX]).abs();
    for (k, alpha) in WIS_LEVELS.iter().enumerate() {
        total += alpha * interval_score(v[k], v[22 - k], 2.0 * alpha, obs)?;
    }
    Ok(total)
}

/// [`wis`] divided by `K + 1/2`, the scale used by most hub tooling.
pub fn wis_normalized(q: &QuantileForecast, obs: f64) -> Result<f64> {
    Ok(wis(q, obs)? / (K_INTERVALS as f64 + 0.5))
}

/// Number of the 11 nested intervals that contain `obs`.
pub fn total_coverage(q: &QuantileForecast, obs: f64) -> usize {
    let v = &q.quantiles;
    (0..K_INTERVALS).filter(|&k| v[k] <= obs && obs <= v[22 - k]).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginScore {
    pub ae: f64,
    pub wis: f64,
    pub coverage: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub mae: f64,
    pub median_ae: f64,
    pub mwis: f64,
    pub mean_total_coverage: f64,
    pub n_origins: usize,
}

pub fn aggregate_scores(records: &[OriginScore]) -> Result<ScoreSet> {
    if records.is_empty() {
        return Err(Error::InsufficientHistory { needed: 1, available: 0 });
    }
    let n = records.len() as f64;
    let aes: Vec<f64> = records.iter().map(|r| r.ae).collect();
    Ok(ScoreSet {
        mae: aes.iter().sum::<f64>() / n,
        median_ae: median(&aes).expect("non-empty"),
        mwis: records.iter().map(|r| r.wis).sum::<f64>() / n,
        mean_total_coverage: records.iter().map(|r| r.coverage as f64).sum::<f64>() / n,
        n_origins: records.len(),
    })
}

/// Improvement over the baseline; `None` when the baseline score is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeScores {
    pub rmae: Option<f64>,
    pub rmedian_ae: Option<f64>,
    pub rwis: Option<f64>,
    pub rc: Option<f64>,
}

fn improvement(baseline: f64, method: f64) -> Option<f64> {
    (baseline > 0.0).then(|| (baseline - method) / baseline)
}

pub fn relative_scores(method: &ScoreSet, baseline: &ScoreSet) -> RelativeScores {
    RelativeScores {
        rmae: improvement(baseline.mae, method.mae),
        rmedian_ae: improvement(baseline.median_ae, method.median_ae),
        rwis: improvement(baseline.mwis, method.mwis),
        // Higher coverage is better, so the sign is flipped.
        rc: (baseline.mean_total_coverage > 0.0).then(|| {
            (method.mean_total_coverage - baseline.mean_total_coverage) / baseline.mean_total_coverage
        }),
    }
}
