use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GhostError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GhostError {
    /// A scalar argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Extents of two operands disagree, or a shape invariant is violated.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A file was readable but its contents are malformed.
    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Statistics needed to fit a transform are degenerate.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// A non-finite value appeared during a numerical computation.
    #[error("non-finite value in {name}")]
    NonFinite { name: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("not found: {0}")]
    NotFound(String),

    /// A verification gate (for example the gradient check) did not pass.
    #[error("gate failed: {0}")]
    GateFailed(String),
}

impl GhostError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GhostError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        GhostError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
