//! Numerical homogenisation toolkit for periodic liquid-crystal colloids.
//!
//! The crate computes the effective diffusivity and permeability tensors of a
//! periodically perforated unit cell, time-steps the coupled Stokes/director
//! system on perforated domains at decreasing obstacle scale, solves the
//! decoupled Darcy and gradient-flow limit systems on the full domain, and
//! runs an epsilon-sweep that measures how the perforated solutions approach
//! the limit fields.
//!
//! Modules:
//! - [`geometry`]: staggered (MAC) grids, obstacle masks, face classification.
//! - [`expr`]: analytic expression parser used for forcing and initial data.
//! - [`solver`]: CSR operators, conjugate gradients, Uzawa saddle-point solver.
//! - [`ops`]: discrete differential operators and quadratures on MAC grids.
//! - [`cell`]: unit-cell problems and effective tensor assembly.
//! - [`sim`]: perforated-domain coupled simulation and energy accounting.
//! - [`limit`]: Darcy and effective director-flow solvers on the full domain.
//! - [`harness`]: cell averaging, convergence diagnostics, epsilon sweep.
//! - [`io`]: config loading, VTK / CSV / JSON writers.

pub mod cell;
pub mod error;
pub mod expr;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod limit;
pub mod ops;
pub mod sim;
pub mod solver;

#[cfg(test)]
pub(crate) mod test_oracles;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
