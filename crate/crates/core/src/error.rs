use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("state {state} out of range for `{variable}` (cardinality {cardinality})")]
    StateOutOfRange {
        variable: String,
        state: usize,
        cardinality: usize,
    },

    #[error("assignment is missing variable `{0}`")]
    MissingAssignment(String),

    #[error("no CPT for variable `{0}`")]
    MissingCpt(String),

    #[error("cycle detected among {0:?}")]
    Cycle(Vec<String>),

    #[error("empty dataset")]
    EmptyData,

    #[error("incomplete record {row} for `{variable}`")]
    IncompleteData { variable: String, row: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid expert edge {from} -> {to}: {reason}")]
    ExpertEdge {
        from: String,
        to: String,
        reason: String,
    },

    #[error("evidence has zero probability under the model at frame {0}")]
    ImpossibleEvidence(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0}")]
    Corpus(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
