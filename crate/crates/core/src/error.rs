use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A log or square-root argument in the surrogate went non-positive.
    #[error("surrogate domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid circuit parameters: {0}")]
    InvalidCircuit(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("split sizes {test} + {train} exceed dataset size {available}")]
    SplitSize {
        test: usize,
        train: usize,
        available: usize,
    },

    #[error("feature {0} is constant; cannot standardize")]
    DegenerateFeature(usize),

    #[error("target dimension {0} is constant on the evaluation set")]
    DegenerateTarget(usize),

    #[error("target entry at row {row}, column {col} is zero; relative error undefined")]
    ZeroTarget { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("invalid hyperparameters: {0}")]
    HyperParams(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("feed length column already excluded")]
    AlreadyExcluded,

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("model file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u8, expected: u8 },

    #[error("{context}: {source}")]
    Tagged {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn tagged(self, context: impl Into<String>) -> Self {
        Error::Tagged {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through configuration tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Tagged { source, .. } => source.root(),
            other => other,
        }
    }
}
