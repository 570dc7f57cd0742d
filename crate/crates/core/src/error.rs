use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("missing class constant: {0}")]
    MissingConstant(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration failed validation: {0}")]
    Validation(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("scenario error(s):\n{}", .0.join("\n"))]
    Scenario(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
