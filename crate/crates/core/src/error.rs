//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Vector or matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Environment interaction error (bad action, stepping a finished episode, ...).
    #[error("environment error: {0}")]
    Env(String),

    /// Replay memory misuse (push without an open episode, finalizing empty, ...).
    #[error("replay error: {0}")]
    Replay(String),

    /// Value iteration exceeded its iteration budget.
    #[error("value iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    /// Text-format parse failure with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Training produced a non-finite loss.
    #[error("non-finite loss at step {step}: training diverged")]
    Divergence { step: u64 },

    /// Configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint version or shape problem.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for CoreError {
    fn from(e: serde_json::Error) -> Self {
        CoreError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
