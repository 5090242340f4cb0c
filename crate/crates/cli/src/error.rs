use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Exit status for failures of preconditions and invariants.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit status for I/O and parsing failures.
pub const EXIT_IO: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] cagekit::Error),

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("invalid usage: {0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_validation() => EXIT_VALIDATION,
            CliError::Core(_) | CliError::Io { .. } | CliError::Json { .. } => EXIT_IO,
            CliError::Manifest(_) | CliError::Usage(_) => EXIT_VALIDATION,
        }
    }
}
