//! Error taxonomy shared by every module in the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A layer or model was assembled with incompatible dimensions.
    #[error("configuration error: {0}")]
    Config(String),

    /// Runtime tensors disagree on shape.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A tensor extent violates an operation's size requirement.
    #[error("size error: {0}")]
    Size(String),

    /// The caller invoked an operation outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// Checkpoint file is missing, truncated, or from an unknown version.
    #[error("checkpoint error in {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    /// Training aborted because the loss became non-finite.
    #[error("non-finite loss at iteration {iter}; last good checkpoint: {last_checkpoint}")]
    NonFiniteLoss { iter: u64, last_checkpoint: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
