//! Error type shared across the pipeline.
//!
//! Variants are grouped by how callers should react: `Config` means the
//! request itself was malformed, `Format` means an input file was, and
//! `Divergence` means an optimizer produced a non-finite loss and the run
//! cannot be trusted. The CLI maps these groups onto distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// An input file violated its documented format. `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    /// A parameter, config file, or generator spec was invalid.
    #[error("invalid config: {0}")]
    Config(String),

    /// An operation that needs data received none (or none usable).
    #[error("empty input: {0}")]
    Empty(String),

    /// Feature dimensions disagree with what a model was trained on.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// Training produced a non-finite loss.
    #[error("optimization diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    /// A cross-validation fold failed; wraps the underlying error.
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format { line, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    pub fn empty(message: impl Into<String>) -> Self {
        Error::Empty(message.into())
    }

    pub fn in_fold(fold: usize, source: Error) -> Self {
        Error::Fold { fold, source: Box::new(source) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
