use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("flag conflict: {0}")]
    Conflict(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("missing {path}; run `atypicality {stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Conflict(_) => 2,
            CliError::Input(_) => 3,
            CliError::MissingArtifact { .. } => 4,
            CliError::Estimation(_) => 5,
        }
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn input(err: impl std::fmt::Display) -> Self {
        CliError::Input(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
