//! Point and probabilistic scoring, baseline-relative summaries and the
//! growth-rate stratification of absolute percentage errors.

mod bspline;
mod growth;
mod scores;

pub use bspline::PenalizedSpline;
pub use growth::{growth_rate_stratification, GrowthInput, GrowthOrigin, StratificationRow, StratificationTable};
pub use scores::{
    absolute_error, aggregate_scores, interval_score, relative_scores, total_coverage, wis, wis_normalized,
    OriginScore, RelativeScores, ScoreSet, WIS_LEVELS,
};
