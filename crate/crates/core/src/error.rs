//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent configuration input.
    #[error("config error: {0}")]
    Config(String),

    /// A standing assumption of the observer design does not hold
    /// (zero channel, loss of joint observability, disconnected graph,
    /// uncertifiable rate).
    #[error("assumption violated: {0}")]
    Assumption(String),

    /// Numerical routine failed (non-convergence, singular solve).
    #[error("numerics: {0}")]
    Numerics(String),

    /// A reproduce-run acceptance check failed.
    #[error("acceptance check failed: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 0 ok, 2 config error, 3 assumption violated,
    /// 4 acceptance check failed, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Assumption(_) => 3,
            Error::Acceptance(_) => 4,
            Error::Numerics(_) | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
