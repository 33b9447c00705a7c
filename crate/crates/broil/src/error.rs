use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid configuration or input files, detected before any training.
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] broil_core::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit code: 1 for configuration problems, 2 for failures at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Reclassify any error raised while preparing a run as a config error.
pub fn at_startup<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        HarnessError::Config(_) => e,
        other => HarnessError::Config(other.to_string()),
    })
}
