use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    Cell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("invalid split: {0}")]
    Split(String),

    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("report: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Header(_) => "header",
            Error::Cell { .. } => "cell",
            Error::Row { .. } => "row",
            Error::DuplicateId { .. } => "duplicate_id",
            Error::Dataset(_) => "dataset",
            Error::Split(_) => "split",
            Error::Config { .. } => "config",
            Error::UnknownKey(_) => "unknown_key",
            Error::Dimension { .. } => "dimension",
            Error::Length { .. } => "length",
            Error::Diverged { .. } => "diverged",
            Error::Invalid(_) => "invalid",
            Error::Format(_) => "format",
            Error::Report(_) => "report",
        }
    }
}
