//! Numerical laboratory for regularized curvature of conical metrics.
//!
//! A singular 2-D metric is regularized by a net of smoothing kernels and
//! transport operators; the curvature of the regularized metric is then
//! integrated against test functions and compared, as ε → 0, with the
//! distributional curvature `4π(1 − α) δ₀` of the cone.

// validation rejects NaN through negated comparisons; tensor code indexes
// components the way the formulas are written
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod association;
#[cfg(feature = "cli")]
pub mod cli;
pub mod error;
pub mod fields;
pub mod fit;
pub mod geometry;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod region;
pub mod transport;

pub use error::{Error, Result};
