use std::path::PathBuf;

use aas_core::AasError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{clause}: {source}")]
    Clause {
        clause: &'static str,
        #[source]
        source: AasError,
    },
    #[error(transparent)]
    Core(#[from] AasError),
    #[error("{0}")]
    Invariant(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        Self::Validation(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 0 success, 1 validation, 2 invariant or audit failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) | Self::Line { .. } | Self::Clause { .. } | Self::Core(_) => 1,
            Self::Invariant(_) => 2,
            Self::Io { .. } => 3,
        }
    }
}

pub(crate) trait ClauseContext<T> {
    fn clause(self, clause: &'static str) -> Result<T>;
}

impl<T> ClauseContext<T> for std::result::Result<T, AasError> {
    fn clause(self, clause: &'static str) -> Result<T> {
        self.map_err(|source| CliError::Clause { clause, source })
    }
}
