use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inputs are individually valid but used together incorrectly
    /// (mismatched grids, wrong model class, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// A numerical procedure failed (non-convergence, loss of definiteness, non-finite state).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// The requested check requires a hypothesis that does not hold (e.g. H <= 1/2 for T2).
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    /// A configured object failed its own consistency gate.
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}
