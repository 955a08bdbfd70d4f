use thiserror::Error;

/// Errors raised by the solver, simulator and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Model parameters or inputs that violate a standing assumption.
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    /// A demand density that cannot be discretized.
    #[error("demand construction failed: {0}")]
    Demand(String),

    /// Malformed policy/value file.
    #[error("policy file line {line}: {reason}")]
    Format { line: usize, reason: String },

    /// A diagnostic refused to run because its hypothesis fails.
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    /// Error tagged with the horizon it came from.
    #[error("horizon {horizon}: {source}")]
    AtHorizon {
        horizon: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
