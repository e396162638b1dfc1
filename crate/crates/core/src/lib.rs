//! Numerical laboratory for maximal L^p-regularity of non-autonomous
//! parabolic equations on the periodic torus.
//!
//! The crate builds evolution families for operators whose coefficients are
//! only measurable (piecewise constant) in time, solves
//! `u' + (λ + A(t)) u = f` through the variation-of-constants formula and
//! measures the constants that appear in the regularity estimates.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod experiment;
pub mod expm;
pub mod field;
pub mod quadrature;
pub mod quasilinear;
pub mod rbound;
pub mod rng;
pub mod solver;
pub mod symbol;
pub mod weights;

pub use error::{LabError, Result};
pub use num_complex::Complex64;
