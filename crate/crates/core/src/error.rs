use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IprError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IprError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("class {class} has no precise samples to initialize its prototype")]
    EmptyClass { class: usize },

    #[error("finite-difference oracle failed at coordinate {index}: f is not finite")]
    OracleFailure { index: usize },

    #[error("{}: line {line}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Parse {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("dataset validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: {message}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IprError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        IprError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        IprError::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }
}
