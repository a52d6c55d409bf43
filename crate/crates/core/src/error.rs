use thiserror::Error;

/// Errors raised anywhere in the profile-optimization pipeline.
#[derive(Debug, Error)]
pub enum PboError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("black-box evaluation failed: {0}")]
    BlackBox(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PboError {
    /// Short machine-readable tag, used in the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            PboError::InvalidArgument(_) => "invalid-argument",
            PboError::NumericalFailure(_) => "numerical-failure",
            PboError::Degenerate(_) => "degenerate",
            PboError::Config(_) => "config",
            PboError::BlackBox(_) => "black-box",
            PboError::Io(_) => "io",
            PboError::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, PboError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(PboError::InvalidArgument(msg.into()))
}
