use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every variant names the module that raised it and the offending input.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: invalid input: {message}")]
    InvalidInput { module: &'static str, message: String },

    #[error("annotations {path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("annotations {path}, line {line}: {message}")]
    Annotation { path: PathBuf, line: usize, message: String },

    #[error("checkpoint {path}: field `{field}`: {message}")]
    Checkpoint { path: PathBuf, field: String, message: String },

    #[error("pseudo-label store {path}: {message}")]
    PseudoLabels { path: PathBuf, message: String },

    #[error("config: {message}")]
    Config { message: String },

    #[error("training: non-finite loss at epoch {epoch}, batch samples [{}]", .sample_ids.join(", "))]
    NonFiniteLoss { epoch: usize, sample_ids: Vec<String> },

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("io {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }

    /// True for problems with the caller's inputs (as opposed to runtime failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput { .. }
                | Error::MissingColumn { .. }
                | Error::Annotation { .. }
                | Error::Config { .. }
                | Error::Checkpoint { .. }
                | Error::PseudoLabels { .. }
        )
    }
}
