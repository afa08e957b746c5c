use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, unsorted input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid configuration values (image size, probabilities, schedule).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    Version {
        path: String,
        found: String,
        expected: String,
    },

    /// Training produced a non-finite loss.
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (image `{image_id}`)")]
    Diverged {
        epoch: usize,
        batch: usize,
        image_id: String,
        loss: f64,
    },

    /// Inputs that are well-formed but unusable (empty evaluation sets, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
