use std::fmt;
use std::path::Path;

use gas_core::GasError;
use gas_eval::EvalError;
use gas_prep::PrepError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CLIENT: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_PARSE: i32 = 5;

/// A failed command: exit code, the pipeline stage that failed, and why.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub stage: &'static str,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error [{}]: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn new(code: i32, stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            stage,
            message: message.into(),
        }
    }

    pub fn validation(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(EXIT_VALIDATION, stage, message)
    }

    pub fn io(stage: &'static str, path: &Path, e: impl fmt::Display) -> Self {
        Self::validation(stage, format!("{}: {e}", path.display()))
    }

    pub fn gas(stage: &'static str, e: GasError) -> Self {
        let code = match e {
            GasError::Backend { .. } => EXIT_CLIENT,
            GasError::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_VALIDATION,
        };
        Self::new(code, stage, e.to_string())
    }

    pub fn prep(stage: &'static str, e: PrepError) -> Self {
        let code = match &e {
            PrepError::Parse { .. } | PrepError::MalformedPlan(_) => EXIT_PARSE,
            PrepError::Client { .. } => EXIT_CLIENT,
            PrepError::Plan(g) => return Self::gas(stage, g.clone()),
            PrepError::GroundingFailure { .. }
            | PrepError::InvalidRequest(_)
            | PrepError::Io(_) => EXIT_VALIDATION,
        };
        Self::new(code, stage, e.to_string())
    }

    pub fn eval(stage: &'static str, e: EvalError) -> Self {
        let code = match e {
            EvalError::Backend(_) => EXIT_CLIENT,
            _ => EXIT_VALIDATION,
        };
        Self::new(code, stage, e.to_string())
    }
}
