use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: cannot read file: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported image format")]
    UnsupportedFormat { path: PathBuf },

    #[error("{path}: corrupt image stream: {reason}")]
    CorruptImage { path: PathBuf, reason: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {left} bins vs {right} bins")]
    Shape { left: usize, right: usize },

    #[error("not a probability vector: {0}")]
    NotNormalized(String),

    #[error("support violation at bin {bin}: P > 0 where Q = 0")]
    Support { bin: usize },

    #[error("class '{0}' has no decodable images")]
    EmptyClass(String),

    #[error("invalid value: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown GPU type '{name}'; known types: {}", known.join(", "))]
    UnknownGpu { name: String, known: Vec<String> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("missing complexity score for dataset '{0}'")]
    MissingComplexity(String),

    #[error("{count} image(s) failed to decode; first: {first}")]
    DecodeFailures { count: usize, first: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
