//! Density-based anomaly detectors and exactly invertible
//! reparametrizations that change their verdicts without changing the
//! underlying distribution.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bijections;
pub mod constructions;
pub mod densities;
pub mod detectors;
pub mod error;
pub mod numerics;

pub use error::{Error, Result};
pub use numerics::RngState;
