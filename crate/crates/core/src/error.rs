use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EaeError>;

#[derive(Debug, Error)]
pub enum EaeError {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("batch-norm running statistics are uninitialized (no training step has run)")]
    Uninitialized,

    #[error("training diverged: non-finite gradient in parameter `{0}`")]
    NonFiniteGrad(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Divergence { epoch: usize, reason: String },

    #[error("sample size too small: need at least {needed}, got {got}")]
    SampleSize { needed: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid architecture: {0}")]
    Spec(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("bad IDX magic number {found} (expected {expected})")]
    Format { expected: u32, found: u32 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "no fitted density at {0}; run `eae fit-density --kind <mvg|gmm>` against the checkpoint first"
    )]
    MissingDensity(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl EaeError {
    pub(crate) fn dim(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        EaeError::Dimension {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EaeError::Io {
            path: path.into(),
            source,
        }
    }
}
