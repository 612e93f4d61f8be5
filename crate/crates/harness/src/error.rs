use std::path::PathBuf;

use csysid_core::SysIdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("{context}: {source}")]
    Runtime {
        context: String,
        #[source]
        source: SysIdError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data in {path}: {message}")]
    Data { path: PathBuf, message: String },
}

impl HarnessError {
    /// Process exit code: 1 config, 2 runtime degeneracy, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime {
                source: SysIdError::Config(_),
                ..
            } => 1,
            HarnessError::Runtime { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Data { .. } => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn runtime(context: impl Into<String>) -> impl FnOnce(SysIdError) -> Self {
        let context = context.into();
        move |source| HarnessError::Runtime { context, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
