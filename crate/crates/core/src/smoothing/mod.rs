//! Local regression and the robust seasonal-trend decomposition built on it.

mod loess;
mod stl;

pub use loess::{loess_fit, LoessConfig, LoessFit};
pub use stl::{bisquare_weights, stl_decompose, StlDecomposition, StlParams};
