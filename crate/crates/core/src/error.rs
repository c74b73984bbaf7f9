use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum LaseError {
    /// A parameter fell outside its admissible range.
    #[error("parameter out of range: {0}")]
    Range(String),

    /// A configuration value is inconsistent or missing.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (wrong arity, wrong shape).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A metric was evaluated outside the domain where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Training produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LaseError>;

pub(crate) fn contract(msg: impl Into<String>) -> LaseError {
    LaseError::Contract(msg.into())
}
