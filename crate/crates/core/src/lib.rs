//! Robust and conjugate spatio-temporal Gaussian processes via state-space filtering.
//!
//! The crate turns a separable space-time kernel into a linear SDE, filters and smooths
//! observations with a Kalman recursion whose update can be made robust through a
//! generalised-Bayes weight, and tunes hyperparameters by minimising a (weighted)
//! one-step-ahead predictive loss.

pub mod batch;
pub mod bench;
pub mod data_io;
pub mod diagnostics;
pub mod error;
pub mod filtering;
pub mod hyperopt;
pub mod linalg;
pub mod ssm;
pub mod weights;

pub use error::{Error, Result};
