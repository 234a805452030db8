//! Comparison regressors: least-squares linear regression and
//! gradient-boosted regression trees.

pub mod gbt;
pub mod linear;

pub use gbt::{GbtConfig, GbtModel};
pub use linear::LinearModel;
