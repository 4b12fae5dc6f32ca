//! Reduced-order integral predictors for state and parameter estimation of
//! observer-canonical systems driven by periodic measurements.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod fundamental;
pub mod morris_lecar;
pub mod ode;
pub mod predictor;
pub mod quadrature;
pub mod signal;

pub use error::{Error, Result};
