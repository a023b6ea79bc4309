use std::path::PathBuf;

use thiserror::Error;

use crate::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed IDX data: {0}")]
    Format(String),

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate task: {0}")]
    DegenerateTask(String),

    #[error("class {0} has no training instances")]
    MissingClass(ClassId),

    #[error("invalid state: {0}")]
    State(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Consistency(_) => "consistency",
            Error::Protocol(_) => "protocol",
            Error::Parameter(_) => "parameter",
            Error::Input(_) => "input",
            Error::Precondition(_) => "precondition",
            Error::DegenerateTask(_) => "degenerate_task",
            Error::MissingClass(_) => "missing_class",
            Error::State(_) => "state",
            Error::Infeasible(_) => "infeasible",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Serde(_) => "serde",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
