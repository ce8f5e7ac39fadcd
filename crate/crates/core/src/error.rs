use serde::Serialize;
use thiserror::Error;

/// Errors raised by the numerical and sampling layers.
#[derive(Debug, Error, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Error {
    /// A precondition on the arguments was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation could not reach the requested accuracy.
    #[error("accuracy error in {what}: achieved {achieved:.3e}, requested {requested:.3e}")]
    Accuracy {
        what: String,
        achieved: f64,
        requested: f64,
    },

    /// A linear solve failed (non-convergence or singular factorization).
    #[error("solver error: {0}")]
    Solver(String),

    /// A matrix expected to be positive (semi)definite was not.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A rejection sampler exhausted its work budget.
    #[error("budget exhausted in {what}: acceptance estimate {acceptance:.3e}")]
    Budget { what: String, acceptance: f64 },

    /// Malformed input file or configuration.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Configuration key not understood by the selected command.
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn accuracy(what: impl Into<String>, achieved: f64, requested: f64) -> Self {
        Error::Accuracy {
            what: what.into(),
            achieved,
            requested,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
