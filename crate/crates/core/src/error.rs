//! Error type shared by all modules of the crate.

use std::path::PathBuf;

/// Errors produced by signal transforms, detectors, IO and the classifier.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received input that violates its preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A text file failed to parse; carries the 1-based line number.
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A configuration value is out of its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// The training set cannot produce a usable model (e.g. single class).
    #[error("degenerate training set: {0}")]
    DegenerateModel(String),

    /// A serialized model could not be loaded.
    #[error("model load failed: {0}")]
    ModelLoad(String),

    /// Unsupported or malformed audio file.
    #[error("audio format: {0}")]
    AudioFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
