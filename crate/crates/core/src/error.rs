use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("covariate column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),

    #[error("duplicate coordinates at rows {first} and {second}")]
    DuplicateCoordinates { first: usize, second: usize },

    #[error("model is not identifiable: {}", .0.join("; "))]
    NotIdentifiable(Vec<String>),

    #[error("Cholesky factorization of {what} failed after jitter up to {jitter:e}")]
    Factorization { what: &'static str, jitter: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate chain: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("{file}:{line}: column `{column}`: {message}")]
    Parse {
        file: String,
        line: usize,
        column: String,
        message: String,
    },

    #[error("{file}: [{section}] {field}: {message}")]
    Config {
        file: String,
        section: String,
        field: String,
        message: String,
    },

    #[error("hash mismatch for {file}: manifest {expected}, found {found}")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Factorization { .. } | Error::Degenerate(_) | Error::Quadrature(_) => true,
            Error::AtIteration { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
