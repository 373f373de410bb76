//! Numerical laboratory for the first-order mean-field-games planning
//! problem with potential on the periodic torus.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod io;
pub mod manufactured;
pub mod moser;
pub mod problem;
pub mod residuals;
pub mod scenarios;
mod serde_ext;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
