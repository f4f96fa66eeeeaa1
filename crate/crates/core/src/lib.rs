// `!(x > 0.0)` style guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod error;
pub mod evaluation;
pub mod forecast;
pub mod ingest;
pub mod par;
pub mod piecewise;
pub mod pipeline;
pub mod preprocess;
pub mod probabilistic;
pub mod riskmap;
pub mod screening;
pub mod smoothing;
pub mod stats;
