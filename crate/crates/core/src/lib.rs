//! Grid-based design of zero-delay joint source-channel coding mappings.
//!
//! Densities and mappings are tabulated on uniform grids; integrals are midpoint
//! Riemann sums and off-grid evaluation is multilinear interpolation.

pub mod analysis;
pub mod compare;
pub mod csvio;
pub mod density;
pub mod descent;
pub mod error;
pub mod grid;
pub(crate) mod interp;
pub mod mapping;
pub mod par;
pub mod recipes;
pub mod sideinfo;
pub mod solver;

pub use density::{DensitySpec, SampledDensity};
pub use descent::{Init, SolveReport, SolverConfig, StopReason, TraceRow};
pub use error::{Error, Result};
pub use grid::GridSpec;
pub use mapping::{LinearCoeffs, SampledMapping, Spiral, SpiralParams};
pub use sideinfo::SideInfoProblem;
pub use solver::ProblemInstance;
