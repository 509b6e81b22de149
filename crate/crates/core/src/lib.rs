//! Fairness auditing of treatment-assignment policies on randomized
//! experiment data: effect estimation, additive surrogates, mock-experiment
//! metrics, and improvement sweeps.

pub mod dataset;
pub mod distill;
pub mod error;
pub mod fairness;
pub mod gam;
pub mod improve;
pub mod interactions;
pub mod models;
pub mod stats;

pub use error::{Error, Result};
