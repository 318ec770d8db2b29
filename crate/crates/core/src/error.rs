use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates a modelling constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The training integrator produced a non-finite parameter.
    #[error("integration diverged at step {step} (t = {time})")]
    Diverged { step: usize, time: f64 },

    /// A kernel matrix that must be symmetric is not.
    #[error("assembly inconsistency: relative asymmetry {asymmetry:.3e} exceeds {tolerance:.1e}")]
    AssemblyInconsistency { asymmetry: f64, tolerance: f64 },

    /// An eigenvalue fell below the admissible negative threshold.
    #[error("positive semi-definiteness violated: eigenvalue {eigenvalue:.3e} below -{threshold:.3e}")]
    PsdViolation { eigenvalue: f64, threshold: f64 },

    /// Explicit time stepping blew up.
    #[error("step size too large: residual norm grew by a factor {growth:.2e}")]
    StepSize { growth: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
