use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the analysis and classification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid window size {s} for a series of length {len}")]
    InvalidWindowSize { s: usize, len: usize },

    #[error("a polynomial of order {order} cannot be fitted to {points} points")]
    UnderdeterminedFit { points: usize, order: usize },

    #[error("value {0} lies outside the open interval (0, 1)")]
    Domain(f64),

    #[error("a window has zero variance, which is undefined for q = {q}")]
    DegenerateVariance { q: f64 },

    #[error("power-law fit needs at least 3 scales, got {0}")]
    InsufficientScales(usize),

    #[error("series of length {len} is too short, at least {needed} points are required")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("line {line}: schema violation: {msg}")]
    Schema { line: usize, msg: String },

    #[error("line {line}: malformed record: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
