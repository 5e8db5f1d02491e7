use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
///
/// The variants map onto the CLI exit codes: contract-style failures
/// (`Domain`, `Contract`, `Unsupported`, `NoQsd`, `Config`) exit with 1,
/// numerical failures (`Numeric`, `StatisticalPower`) with 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The mechanism (or configuration) does not satisfy the operation's hypothesis.
    #[error("contract error: {0}")]
    Contract(String),

    /// Classification needs asymptotic exponents the mechanism cannot supply.
    #[error("unsupported classification: {0}")]
    Unsupported(String),

    /// The requested decay rate is not of the form n * beta0.
    #[error("no QSD exists for rate of decay {beta} (beta0 = {beta0}, ratio = {ratio})")]
    NoQsd { beta: f64, beta0: f64, ratio: f64 },

    /// A root finder, quadrature or ODE integration failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Conditioning left too few samples for a meaningful estimate.
    #[error("statistical power error: {0}")]
    StatisticalPower(String),

    /// Malformed configuration text.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// `true` for failures that stem from numerical breakdown rather than
    /// from a bad request.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::StatisticalPower(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
