use thiserror::Error;

/// Errors raised by the simulation and exact-computation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a non-empty composition")]
    EmptyComposition,

    #[error("event budget of {budget} exceeded")]
    BudgetExceeded { budget: u64 },

    #[error("total mass mismatch: expected {expected}, found {found}")]
    MassMismatch { expected: u64, found: u64 },

    #[error("inconsistent scaffolding: {0}")]
    InconsistentScaffolding(String),

    #[error("degenerate statistical test: {0}")]
    DegenerateTest(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for [`Error::InvalidParameter`].
pub fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
