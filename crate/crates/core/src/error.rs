use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("cannot stratify class `{class}`: {count} clips, need at least 3")]
    Stratification { class: String, count: usize },

    #[error("decode error for {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("no expansion candidate reaches complexity {target:.4e} within tolerance; nearest per op: {nearest}")]
    NoCandidate { target: f64, nearest: String },

    #[error("evaluator failed at step {step} on {op} candidate {factors}: {source}")]
    Evaluator {
        step: usize,
        op: String,
        factors: String,
        #[source]
        source: Box<Error>,
    },

    #[error("contraction error: {0}")]
    Contraction(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint is incompatible with the target architecture; divergent parameters: {}", .divergent.join(", "))]
    Incompatible { divergent: Vec<String> },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; loss history: {history:?}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        history: Vec<f64>,
    },

    #[error("data preparation error: {0}")]
    Preparation(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl std::fmt::Debug,
        actual: impl std::fmt::Debug,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: format!("{expected:?}"),
            actual: format!("{actual:?}"),
        }
    }
}
