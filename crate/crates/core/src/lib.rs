//! Direct synthesis of 1:1 on-chip transformer geometry.
//!
//! A closed-form surrogate maps transformer geometry to circuit parameters;
//! regressors learn the inverse map from circuit parameters back to geometry.

pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod seed;
pub mod surrogate;

pub use error::{Error, Result};
