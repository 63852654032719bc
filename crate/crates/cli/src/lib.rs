//! Batch front end for the tree attribution engines: explanations,
//! interactions and grouped attributions over CSV data, plus verification
//! and benchmark commands.

mod commands;
pub mod data;
pub mod output;

pub use commands::{execute, BenchArgs, Cli, Command, ExplainArgs, Inputs, ReportFormat, ValidateArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unreadable or inconsistent input.
    #[error("{0}")]
    Input(String),
    /// A verification or bound check failed.
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Validation(_) => 1,
        }
    }
}
