use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("line {line}: unknown label {value:?} (expected fake or real)")]
    Label { line: u64, value: String },

    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: model expects {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid model/feature pair {model}+{features}: {reason}")]
    InvalidPair {
        model: String,
        features: String,
        reason: String,
    },

    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },

    #[error("unsupported artifact format version {found} (this build reads version {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed model artifact: {0}")]
    Artifact(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidPair { .. } => 3,
            Error::Training { .. } => 4,
            Error::VersionMismatch { .. } => 5,
            _ => 2,
        }
    }
}
