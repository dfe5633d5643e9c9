//! Evolution of densities on a logarithmic grid.

mod grid;
mod ops;
mod series;

pub use grid::{GridDensity, LogGrid};
pub use ops::DensityEngine;
pub use series::{OperatorTrace, SeriesOptions};
