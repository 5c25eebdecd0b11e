#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Certainty-equivalence adaptive control of uncertain nonlinear systems.
//!
//! The plant is `x' = f(x) + Delta(x)^T theta + B(x) u` with unknown `theta`.
//! A CLF-based min-norm controller acts on the estimate `theta_hat`, which is
//! driven by one of the estimation laws in [`estimators`]. [`simulation`]
//! integrates the closed loop and [`metrics`] holds the Lyapunov monitors used
//! to check it.

pub mod clf;
pub mod clf_synthesis;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod simulation;

pub use error::{Error, Result};
