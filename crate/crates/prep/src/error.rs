use gas_core::GasError;
use thiserror::Error;

pub type Result<T, E = PrepError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PrepError {
    /// The model response could not be parsed; `raw` keeps the full text.
    #[error("cannot parse response: {reason}")]
    Parse { reason: String, raw: String },

    #[error("malformed plan: {0}")]
    MalformedPlan(String),

    #[error("grounding failed for {phrase:?}: {reason}")]
    GroundingFailure { phrase: String, reason: String },

    #[error("{service} client error after {attempts} attempt(s): {message}")]
    Client {
        service: &'static str,
        message: String,
        attempts: u32,
    },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Plan(#[from] GasError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PrepError {
    pub(crate) fn parse(reason: impl Into<String>, raw: &str) -> Self {
        PrepError::Parse {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}
