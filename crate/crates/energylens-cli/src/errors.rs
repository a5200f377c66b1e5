//! CLI error channel: usage errors (exit 2) versus runtime errors (exit 1).

use std::fmt;

/// Anything that aborts a CLI run.
#[derive(Debug)]
pub enum CliError {
    /// The invocation itself is wrong: a flag or config key has an invalid
    /// value. The message names the offending flag/key.
    Usage(String),
    /// The invocation is well-formed but the work failed: missing files,
    /// malformed rows, fits that cannot proceed.
    Runtime(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message())
    }
}

impl From<energylens::Error> for CliError {
    fn from(e: energylens::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
