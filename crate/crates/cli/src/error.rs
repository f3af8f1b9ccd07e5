use std::path::{Path, PathBuf};

use thiserror::Error;

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error("no usable data: {0}")]
    EmptyData(String),
    #[error("geometry mismatch: {0}")]
    Geometry(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Malformed { .. } => 3,
            CliError::EmptyData(_) => 4,
            CliError::Geometry(_) => 5,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: &Path, message: impl ToString) -> Self {
        CliError::Malformed {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }
}
