use thiserror::Error;

/// Errors shared across the crate.
///
/// Numerical routines distinguish between caller mistakes
/// ([`InvalidParameter`](Error::InvalidParameter), [`EmptyInput`](Error::EmptyInput),
/// [`InvalidPrior`](Error::InvalidPrior)) and internal guards that tripped
/// ([`NonConvergence`](Error::NonConvergence), [`PrecisionLoss`](Error::PrecisionLoss),
/// [`Underflow`](Error::Underflow)). The CLI maps the former to exit code 1
/// and the latter to exit code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}={value}: {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    #[error("{what} did not converge after {terms} terms")]
    NonConvergence { what: &'static str, terms: usize },

    #[error("precision loss in {what}: {detail}")]
    PrecisionLoss {
        what: &'static str,
        detail: String,
    },

    #[error("{what} underflowed; use the log-scale variant")]
    Underflow { what: &'static str },

    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },

    #[error("invalid prior: {reason}")]
    InvalidPrior { reason: String },

    #[error("integer overflow in {what}")]
    Overflow { what: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, name: &'static str, value: f64, requirement: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            requirement,
        })
    }
}
