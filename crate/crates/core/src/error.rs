//! Error type shared by every module of the crate.

use std::io;

/// Errors produced while loading data, measuring, training or evaluating.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed tree at byte {offset}: {message}")]
    MalformedTree { offset: usize, message: String },

    #[error("validation failed for image `{image}` field `{field}`: {message}")]
    Validation {
        image: String,
        field: String,
        message: String,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown {kind} `{name}`")]
    Lookup { kind: &'static str, name: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn validation(
        image: impl Into<String>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Validation {
            image: image.into(),
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
