use thiserror::Error;

/// Errors raised by the hypergroup-walk library.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A theorem-level precondition does not hold for the requested check.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// The computation needs more states than the configured cap allows.
    #[error("state cap exceeded: {required} states needed, cap is {cap}")]
    StateCap { required: usize, cap: usize },

    /// A numerical procedure failed to reach its target accuracy.
    #[error("{what} did not converge (achieved error {achieved:e}, requested {requested:e})")]
    Numeric {
        what: &'static str,
        achieved: f64,
        requested: f64,
    },

    /// Internal consistency violation; signals a bug rather than bad input.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
