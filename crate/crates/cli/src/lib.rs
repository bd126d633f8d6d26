//! Library side of the `qcka` command: configuration, the four commands
//! and their output formats.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// Errors reported by the command line, each with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or incomplete configuration.
    Config(String),
    /// A parameter or intermediate quantity left its admissible domain.
    Numerical(qcka_core::Error),
    Io(String),
    /// One or more validation properties failed.
    Validation(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) | CliError::Validation(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(e) => write!(f, "numerical domain error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(failed) => write!(f, "validation failed: {}", failed.join(", ")),
        }
    }
}

impl std::error::Error for CliError {}

impl From<qcka_core::Error> for CliError {
    fn from(e: qcka_core::Error) -> Self {
        CliError::Numerical(e)
    }
}
