use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The signal subspace could not be separated or the shift operator is
    /// ill-posed. Callers may retry with a smaller order or the LS solver.
    #[error("degenerate subspace: {0}")]
    Subspace(String),

    #[error("index {index} out of range [0, {bound})")]
    Index { index: usize, bound: usize },

    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("length error: {0}")]
    Length(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
