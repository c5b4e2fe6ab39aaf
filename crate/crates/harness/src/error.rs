use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("no ground-truth cache at {0}; build it with `sba oracle`")]
    OracleMissing(PathBuf),

    #[error(transparent)]
    Core(#[from] sba_core::Error),

    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit code: 2 for bad input, 3 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(sba_core::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}
