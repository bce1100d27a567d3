use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column `{column}`: {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("feature `{0}` is constant")]
    ConstantFeature(String),

    #[error("{d} features exceed the exact attribution limit of {limit} and sampling is disabled")]
    ExactLimit { d: usize, limit: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("a hidden feature needs at least two features")]
    NoHiddenFeature,

    #[error("not a semi-factual: the candidate changes the predicted class")]
    ClassMismatch,

    #[error("model artifact was built for a different schema")]
    SchemaHash,

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
