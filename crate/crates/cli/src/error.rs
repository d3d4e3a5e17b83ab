use std::io;
use std::path::{Path, PathBuf};

use ipr_core::IprError;
use thiserror::Error;

/// Process exit codes, stable for scripting.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] IprError),

    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },

    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },

    #[error("{0}")]
    Input(String),

    #[error("{failed} of {total} seed runs aborted; first failure: {first}")]
    Aborted { failed: usize, total: usize, first: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => match e {
                IprError::Io(_) => EXIT_IO,
                IprError::TrainingAborted { .. } | IprError::NonFinite(_) | IprError::Degenerate(_) => EXIT_NUMERIC,
                _ => EXIT_INPUT,
            },
            CliError::Read { .. } | CliError::Input(_) => EXIT_INPUT,
            CliError::Write { .. } => EXIT_IO,
            CliError::Aborted { .. } => EXIT_NUMERIC,
        }
    }

    pub fn write(path: &Path, source: io::Error) -> Self {
        CliError::Write {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
