use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model parameter fails its construction constraint.
    #[error("invalid parameter `{key}`: {msg}")]
    Parameter { key: String, msg: String },

    /// A configuration key is missing, malformed or out of range.
    #[error("config error in key `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// A caller broke the documented precondition of an operation.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The convergence-rate regression could not be carried out.
    #[error("rate fit failed: {0}")]
    Fit(String),

    /// A boundary model cannot be formed for the given input.
    #[error("boundary model error: {0}")]
    Boundary(String),

    /// The iteration stopped at `k_max` before reaching the tolerance.
    #[error("no convergence within {0} iterations")]
    NotConverged(usize),

    /// Filesystem or serialization failure while writing artifacts.
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn parameter(key: &str, msg: impl Into<String>) -> Self {
        Error::Parameter {
            key: key.to_string(),
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
