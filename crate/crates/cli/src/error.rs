use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: line {line}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] twinbeam::Error),
}

impl CliError {
    /// Process exit code: 2 for unusable input, 3 for infeasible moments,
    /// 4 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(twinbeam::Error::Infeasible { .. }) => 3,
            CliError::Core(twinbeam::Error::Numerical { .. }) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
