//! Generalized momentum SGD for nonsmooth finite-sum objectives.
//!
//! The crate is organised around five pieces:
//!
//! - [`fields`]: the update-direction maps (`sign`, `regu`, `clip`, identity) and their potentials,
//! - [`problems`]: finite-sum test objectives with selection and hull oracles,
//! - [`schedules`]: `(eta_k, theta_k)` generators for single-, two- and fixed-timescale regimes,
//! - [`optimizer`]: the momentum iteration, the five named methods and the sampling loop,
//! - [`diagnostics`]: min-norm points, stationarity, Lyapunov values and shadowing distances.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod optimizer;
pub mod problems;
pub mod schedules;

pub use error::{GsgdError, Result};

/// Coordinates of a point, a momentum vector or a field element.
pub type RealVector = Vec<f64>;
