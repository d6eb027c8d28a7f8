use thiserror::Error;

/// Errors raised by the planning, estimation and learning layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("policy is improper: {0}")]
    ImproperPolicy(String),

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("context protocol violated: {0}")]
    Protocol(String),

    #[error("projection did not converge after {iterations} iterations (objective gap {gap:e})")]
    Projection { iterations: usize, gap: f64 },

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from the user's input rather than from a
    /// failure during the computation.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Dimension(_) | Error::InvalidContext(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
