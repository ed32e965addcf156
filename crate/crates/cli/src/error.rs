use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Schema(String),

    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Model(#[from] lmminfer::Error),
}

/// Process exit codes. Stable across releases.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const INFEASIBLE: i32 = 2;
    pub const NO_SIGN_CHANGE: i32 = 3;
    pub const NUMERICAL: i32 = 4;
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "E_IO",
            CliError::Schema(_) => "E_SCHEMA",
            CliError::Config(_) => "E_CONFIG",
            CliError::Usage(_) => "E_USAGE",
            CliError::Model(e) => e.code(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use lmminfer::Error as E;
        match self {
            CliError::Io { .. } | CliError::Schema(_) | CliError::Config(_) | CliError::Usage(_) => exit::INPUT,
            CliError::Model(E::Infeasible { .. }) => exit::INFEASIBLE,
            CliError::Model(E::NoSignChange { .. }) => exit::NO_SIGN_CHANGE,
            CliError::Model(E::InvalidInput(_) | E::SparsityOverflow { .. } | E::ZeroColumn(_)) => exit::INPUT,
            CliError::Model(_) => exit::NUMERICAL,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
