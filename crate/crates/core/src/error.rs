//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two sampled functions do not live on the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Vector/matrix dimensions are inconsistent.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input carries no numerically significant information (e.g. all-zero
    /// spanning set, zero Gram matrix).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The scalar denominator of the uniform initialization vanishes.
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),

    /// A matrix whose pseudoinverse is required has zero scale.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Every constraint index has already been selected.
    #[error("constraint pool exhausted: all {0} indices selected")]
    Exhausted(usize),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed configuration or data file, with a line diagnostic.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
