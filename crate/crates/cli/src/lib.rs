//! Library half of the `nitrosep` command: configuration, the staged
//! pipeline and its output files.

pub mod config;
pub mod output;
pub mod pipeline;
pub mod synth_bench;

use thiserror::Error;

/// Every error names the stage it came from. Validation errors exit with
/// status 2, everything else with 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{stage}: {message}")]
    Validation { stage: String, message: String },
    #[error("{stage}: {message}")]
    Runtime { stage: String, message: String },
}

impl CliError {
    pub fn validation(stage: impl Into<String>, message: impl ToString) -> Self {
        CliError::Validation {
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    pub fn runtime(stage: impl Into<String>, message: impl ToString) -> Self {
        CliError::Runtime {
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            CliError::Runtime { .. } => 3,
        }
    }
}
