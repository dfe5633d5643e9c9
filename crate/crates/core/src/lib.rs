//! Minimal piecewise-deterministic Markov processes on `(0, inf)` with
//! reference measure `x dx`: characteristics, jump kernels, path simulation,
//! density evolution on a logarithmic grid and explosion diagnostics.

pub mod error;
pub mod characteristics;
pub mod density;
pub mod diagnose;
pub mod func;
pub mod kernels;
pub mod monotone;
pub mod oracles;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod special;

pub use error::{Error, Result};
pub use characteristics::{CharacteristicsSpec, RateSpec, Regime, SemiflowSpec};
pub use density::{DensityEngine, GridDensity, LogGrid, OperatorTrace, SeriesOptions};
pub use diagnose::{Classification, EmbeddedKernel, Verdict};
pub use func::ScalarFn;
pub use kernels::JumpKernel;
pub use simulate::McConfig;
pub use monotone::{Anchor, Construction, Direction, MonotoneMap, TableGrid};
