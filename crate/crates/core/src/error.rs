use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    /// Trace CSV rejected while loading; `line` is 1-based and counts the header.
    #[error("{}: line {line}: {msg}", path.display())]
    Ingest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Structured text (model file, report, manifest) could not be parsed.
    #[error("format error: {0}")]
    Format(String),

    #[error("training failed at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedTrace(_) | Error::Ingest { .. } | Error::Format(_) | Error::Io { .. }
        )
    }
}
