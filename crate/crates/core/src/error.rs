//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Nonlinear solver did not reach its tolerance. Carries the last
    /// iterate so callers can inspect or restart.
    #[error("solver failure: {context} (residual {residual_norm:.3e} after {iterations} iterations)")]
    SolverFailure {
        context: String,
        residual_norm: f64,
        iterations: usize,
        last_iterate: Vec<f64>,
    },

    #[error("NNLS iteration limit exceeded: {0}")]
    NnlsOverrun(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn dims(msg: impl Into<String>) -> Self {
        CoreError::DimensionMismatch(msg.into())
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
