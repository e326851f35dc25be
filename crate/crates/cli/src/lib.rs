//! Command-line harness for asaukit: curve tables, gradient checks,
//! activation comparisons and beta sweeps driven by a JSON config.

pub mod commands;
pub mod config;
pub mod experiments;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or parameters.
    #[error("usage error: {0}")]
    Usage(String),
    /// The output directory or a file in it could not be written.
    #[error("output error: {0}")]
    Output(String),
    /// The run itself failed.
    #[error("run failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Output(_) => EXIT_USAGE,
            CliError::Failed(_) => EXIT_CHECK_FAILED,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

/// Reads `ASAUKIT_THREADS` (a positive worker count) if set.
pub fn thread_cap(raw: Option<&str>) -> Result<Option<usize>, CliError> {
    match raw {
        None => Ok(None),
        Some(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Usage(format!("ASAUKIT_THREADS must be a positive integer, got {v:?}"))),
    }
}
