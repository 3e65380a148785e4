use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_BACKEND: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Core(#[from] pcs_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use pcs_core::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Output { .. } | CliError::Data(_) => EXIT_DATA,
            CliError::Core(E::BackendUnavailable { .. }) => EXIT_BACKEND,
            CliError::Core(E::MutationFailed { unreachable: true, .. }) => EXIT_BACKEND,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
