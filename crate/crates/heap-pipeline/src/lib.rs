//! Experiment pipeline: dataset protocol (splits, normalization), two-stage
//! training, rollout evaluation with the statistical metrics, bit-exact
//! persistence formats, and the multi-seed study harness.

pub mod config;
pub mod evaluate;
pub mod metrics;
pub mod normalize;
pub mod persist;
pub mod protocol;
pub mod report;
pub mod split;
pub mod study;
pub mod train;

pub use evaluate::{evaluate_rollout, metrics_report, MetricsReport};
pub use normalize::NormStats;
pub use protocol::{ProtocolParams, Scale};
pub use split::{make_split, DatasetSplit};
pub use train::{train_autoencoder, train_predictor, History, TrainConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },
    #[error("length error in {path}: expected {expected} bytes of payload, found {actual}")]
    Truncated { path: String, expected: u64, actual: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown parameter in checkpoint: {0}")]
    UnknownParameter(String),
    #[error("missing parameter in checkpoint: {0}")]
    MissingParameter(String),
    #[error("shape mismatch for parameter {name}: checkpoint {got:?}, model {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("degenerate variance: ground-truth curve is constant")]
    DegenerateVariance,
    #[error(transparent)]
    Solver(#[from] heap_solver::SolverError),
    #[error(transparent)]
    Model(#[from] heap_models::ModelError),
    #[error("training failed: {0}")]
    Training(String),
}

impl PipelineError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, reason: impl Into<String>) -> Self {
        PipelineError::Format { path: path.as_ref().display().to_string(), reason: reason.into() }
    }
}
