use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or byte stream is structurally malformed.
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    /// A file is well-formed but uses an encoding outside the supported set.
    #[error("unsupported format: {0}")]
    Unsupported(String),

    /// An input failed an explicit validation contract.
    #[error("validation failed: {0}")]
    Validation(String),

    /// Tensor or signal shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced NaN/Inf or an otherwise unusable value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
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

    /// Process exit code for CLI surfaces: 2 validation, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
