use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants split into two families that the CLI maps onto distinct exit
/// codes: configuration problems ([`Error::is_config`]) and data problems
/// (everything else).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: malformed record: {source}")]
    Record {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: record does not match manifest: {detail}")]
    Shape {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("duplicate sample id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("{0}")]
    Data(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("all pools are empty; no centroid to route against")]
    NoCentroids,

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
