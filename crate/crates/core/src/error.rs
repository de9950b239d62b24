use thiserror::Error;

/// Errors shared across the library. Variants carry enough context to name
/// the offending value, field, or file location.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("action norm {norm} exceeds bound {lambda}")]
    OversizedAction { norm: f64, lambda: f64 },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("untrained model")]
    UntrainedModel,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
