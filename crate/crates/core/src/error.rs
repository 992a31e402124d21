//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// A linear system whose matrix is numerically singular. `cond` is the
    /// spectral condition number that tripped the gate.
    #[error("singular system: {context} (condition number {cond:.3e})")]
    SingularSystem { context: String, cond: f64 },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error(
        "integration did not converge: worst subinterval [{a:.6e}, {b:.6e}] \
         has error estimate {error_estimate:.3e}"
    )]
    IntegrationNonConvergence { a: f64, b: f64, error_estimate: f64 },

    #[error("invalid interval: [{a}, {b}]")]
    InvalidInterval { a: f64, b: f64 },

    /// Conditional residual covariance varies across the covariate support.
    /// Raised by verifiers whose formulas assume homoscedastic residuals.
    #[error("heteroscedastic residuals: {0}")]
    HeteroscedasticResiduals(String),

    /// Two independently evaluated forms of the same quantity disagreed.
    /// This always indicates a transcription bug, never a data problem.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Config(format!("csv: {e}"))
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(format!("toml: {e}"))
    }
}
