use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("metric backend error: {0}")]
    Backend(String),
}
