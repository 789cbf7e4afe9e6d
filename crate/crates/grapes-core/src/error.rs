//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/vector dimensions do not line up for the requested operation.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A value or configuration field is outside its allowed range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A data file does not follow its documented layout.
    #[error("data format: {0}")]
    DataFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Training produced a non-finite loss; the run was aborted.
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
