//! CLI error classification: validation problems exit 1, runtime failures
//! exit 2.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad spec, schema violation, unsatisfied precondition.
    Validation(String),
    /// Failure after inputs were accepted: training, IO, numerics.
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    /// Classify a core error raised while loading/validating inputs.
    pub fn from_input(err: fairdemand_core::Error) -> Self {
        CliError::Validation(err.to_string())
    }

    /// Classify a core error raised mid-run.
    pub fn from_run(err: fairdemand_core::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
