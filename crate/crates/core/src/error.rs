use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-side contract was broken (unknown attribute, bad fraction, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed input data. `location` names the file and 0-based data row.
    #[error("ingest error at {location}: {message}")]
    Ingest { location: String, message: String },

    #[error("{metric} undefined: {reason}")]
    Undefined { metric: &'static str, reason: String },

    #[error("training failed: {0}")]
    Training(String),

    #[error("partitioning infeasible: {0}")]
    Infeasible(String),

    #[error("template error: {0}")]
    Template(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn ingest(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Ingest {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the input data rather than by configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Ingest { .. } | Error::Csv(_) | Error::Schema(_) | Error::Io { .. }
        )
    }
}
