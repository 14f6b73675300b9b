//! Command-line driver around `pairmem-core`: flat key=value experiment
//! configs, CSV input/output, and the four commands (curves, train, grid,
//! drift). Every command is deterministic given its flags and seed.

pub mod commands;
pub mod config;
pub mod csvio;

use std::fmt;

/// Failures bucketed by exit code: 1 usage/config, 2 runtime/data,
/// 3 collapse. Output files promised by a command are written before a
/// collapse is reported.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
    Collapse(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Collapse(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) | CliError::Collapse(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl std::error::Error for CliError {}
