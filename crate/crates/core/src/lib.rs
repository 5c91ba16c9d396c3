//! Solvers for elliptic variational and quasi-variational inequalities whose
//! constraint acts on the Riesz fractional gradient `D^σ`, `0 < σ ≤ 1`.
//!
//! The continuum `ℝ^N` is modelled by a padded periodic box; every fractional
//! operator is a Fourier multiplier on that torus. The constrained problem is
//! approached through an exponential penalty with ε-continuation, from which
//! the Lagrange multiplier is read off.

pub mod analysis;
pub mod error;
pub mod field;
pub mod frgrad;
pub mod instances;
mod linalg;
pub mod oracle;
pub mod qvi;
pub mod sampling;
pub mod vi;

pub use error::{Error, Result};
pub use field::{DomainMask, Grid, Region, ScalarField, VectorField};
pub use frgrad::{FracOps, FracOrder};
