use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Missing files, unreadable input, malformed schema.
    Input,
    /// Data that parses but violates an invariant.
    Validation,
    /// A bug or numerical failure inside the toolkit.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("empty span {article_id}:{start}-{end}")]
    EmptySpan {
        article_id: String,
        start: usize,
        end: usize,
    },

    #[error("span out of bounds {article_id}:{start}-{end} (text length {len})")]
    SpanOutOfBounds {
        article_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("span references missing article '{0}'")]
    MissingArticle(String),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("index {index} out of range for {what} of size {size}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Invalid(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::Json { .. } | Error::Config(_) => {
                ErrorClass::Input
            }
            Error::EmptySpan { .. }
            | Error::SpanOutOfBounds { .. }
            | Error::MissingArticle(_)
            | Error::Invalid(_) => ErrorClass::Validation,
            Error::Shape { .. } | Error::IndexOutOfRange { .. } | Error::NonFinite(_) => {
                ErrorClass::Internal
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
