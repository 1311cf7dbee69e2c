use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus directory not found: {0}")]
    MissingCorpusDir(PathBuf),

    #[error("malformed corpus filename {0:?} (expected <doc_id>__<YYYY-MM-DD>.txt)")]
    MalformedFilename(String),

    #[error("file {0:?} is not valid UTF-8")]
    Undecodable(PathBuf),

    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty input")]
    EmptyInput,

    #[error("no content tokens")]
    NoContentTokens,

    #[error("vocabulary is missing required token {0}")]
    MissingSpecialToken(&'static str),

    #[error("degenerate vector")]
    DegenerateVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("backend failure for {context}: {message}")]
    Backend { context: String, message: String },

    #[error("non-finite logits for {0}")]
    NonFiniteLogits(String),

    #[error("prediction/assignment join mismatch; orphaned keys: {0}")]
    JoinMismatch(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("insufficient overlap")]
    InsufficientOverlap,

    #[error("degenerate regressor")]
    DegenerateRegressor,

    #[error("at least 3 observations required, got {0}")]
    TooFewObservations(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn backend(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Backend {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
