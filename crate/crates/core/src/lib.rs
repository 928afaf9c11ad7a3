//! Active-learning search for fold and Hopf bifurcations of black-box
//! dynamical systems.
//!
//! The pipeline fits independent Gaussian process surrogates to noisy
//! vector-field observations, propagates their uncertainty in closed form to
//! steady states, Jacobians and eigenvalues, and picks the next measurement by
//! minimizing a lower confidence bound on a squared criticality condition.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod bo;
pub mod design;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod seeds;
pub mod steady;
pub mod systems;
pub mod uq;
pub mod verify;

pub use error::{Error, Result};
