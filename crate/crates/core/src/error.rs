use thiserror::Error;

/// Errors raised by the harvesting library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {bound}")]
    InvalidParameter { name: &'static str, value: f64, bound: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "value iteration did not meet the stopping rule within {iterations} iterations (last residual {residual:e})"
    )]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("policy value system for n = {n} is numerically singular")]
    SingularSystem { n: usize },

    #[error("policy never harvests; no battery chain exists")]
    PolicyNeverHarvests,

    #[error("transient block of the absorbing chain is singular")]
    SingularTransientBlock,

    #[error("posterior has no remaining hypotheses")]
    EmptyPosterior,

    #[error("observation history of length {len} exceeds enumeration bound {max}")]
    HistoryTooLong { len: usize, max: usize },

    #[error("a harvest outcome must be G or B, got no observation")]
    MissingHarvestOutcome,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, value: f64, bound: &'static str) -> Self {
        Error::InvalidParameter { name, value, bound }
    }

    /// True when the error stems from invalid user input rather than a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidParameter { .. } | Error::InvalidArgument(_) | Error::HistoryTooLong { .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
