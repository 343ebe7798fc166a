use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DriftError>;

#[derive(Debug, Error)]
pub enum DriftError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("truncated {what} in {path} at byte {offset}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        what: &'static str,
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("duplicate sample id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("sample id mismatch at row {row}: {left:?} vs {right:?}")]
    IdMismatch {
        row: usize,
        left: String,
        right: String,
    },

    #[error("13 layers required, found {found} (missing layer {missing})")]
    MissingLayer { found: usize, missing: usize },

    #[error("no label for sample id {id:?}")]
    MissingLabel { id: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown metric {0:?} (expected cka, procrustes or rsa)")]
    UnknownMetric(String),

    #[error("layer {layer}: {source}")]
    Layer {
        layer: usize,
        #[source]
        source: Box<DriftError>,
    },

    #[error("loss log {path} line {line}: {message}")]
    LossLog {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl DriftError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DriftError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_layer(self, layer: usize) -> Self {
        DriftError::Layer {
            layer,
            source: Box::new(self),
        }
    }
}
