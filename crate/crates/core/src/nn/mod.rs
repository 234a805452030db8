//! Dense feedforward and residual regressors trained with Adam.

pub mod adam;
pub mod arch;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod model;
pub mod train;

pub use adam::{adam_step, param_groups, HyperParams, OptimizerState, ParamGroup};
pub use arch::{Architecture, Preset, ProjectionMode, Shortcut};
pub use loss::LossKind;
pub use model::{DecayMode, Model};
pub use train::{train, EpochRecord, Network, TrainingLog};
