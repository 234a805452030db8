//! Metrics, experiment protocols and closed-loop synthesis checks.

pub mod closed_loop;
pub mod experiment;
pub mod metrics;

pub use closed_loop::{closed_loop_validate, ClosedLoopOptions, ClosedLoopResult, Envelope};
pub use experiment::{
    run_comparison, ExperimentConfig, ExperimentReport, Fitted, ModelSpec, Regressor,
};
pub use metrics::{per_param_smse, r2_score};
