use thiserror::Error;

pub type Result<T, E = GasError> = std::result::Result<T, E>;

/// Errors raised by the gradient engine, backends and optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GasError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("condition not found: {0:?}")]
    ConditionNotFound(String),

    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { message: String, attempts: u32 },

    #[error("degenerate plan: {0}")]
    DegeneratePlan(String),

    #[error("optimization diverged at step {step} (latent norm {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    #[error("configuration error: {0}")]
    Config(String),
}

impl GasError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GasError::InvalidArgument(msg.into())
    }
}
