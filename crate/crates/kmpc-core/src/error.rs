//! Error type shared across the toolkit.
//!
//! Failures are grouped into four classes so the CLI can map them to
//! distinct exit codes: configuration, data, numerics, and I/O.

use std::path::PathBuf;

/// Toolkit-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration: bad parameter values, inconsistent files,
    /// mismatched components.
    #[error("config: {0}")]
    Config(String),

    /// Data problems: empty phases, malformed datasets, missing history.
    #[error("data: {0}")]
    Data(String),

    /// Numerical failures: integrator blow-up, divergent Riccati iteration.
    #[error("numerics: {0}")]
    Numerics(String),

    /// Filesystem failures, annotated with the offending path.
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this failure class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) => 3,
            Error::Numerics(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
