//! The `mocp` pipeline: snapshot generation, POD, reduced-model assembly,
//! multiobjective solves and high-fidelity revalidation.

pub mod commands;
pub mod config;
pub mod output;

use mocp_core::MocpError;

pub use commands::{cmd_generate, cmd_pod, cmd_rom, cmd_solve, cmd_validate, Command};
pub use config::{Overrides, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_MISSING_CONTROLS: i32 = 5;

/// Error with the process exit code it maps to.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }

    /// Invalid configurations share the I/O exit code.
    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, format!("config: {}", message.into()))
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self::new(EXIT_SOLVER, message)
    }

    pub fn missing_controls(message: impl Into<String>) -> Self {
        Self::new(EXIT_MISSING_CONTROLS, message)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<MocpError> for CliError {
    fn from(e: MocpError) -> Self {
        let code = match &e {
            MocpError::Io(_) | MocpError::Parse(_) => EXIT_IO,
            MocpError::Degenerate(_) => EXIT_DEGENERATE,
            MocpError::Shooting { .. }
            | MocpError::LineSearch(_)
            | MocpError::Stalled(_)
            | MocpError::BlowUp { .. }
            | MocpError::Evaluation(_)
            | MocpError::NonFinite(_) => EXIT_SOLVER,
            _ => 1,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e.to_string())
    }
}

/// Runs one command and returns a human-readable summary.
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<String, CliError> {
    match cmd {
        Command::Generate => cmd_generate(cfg).map(|s| s.to_string()),
        Command::Pod => cmd_pod(cfg).map(|s| s.to_string()),
        Command::Rom => cmd_rom(cfg).map(|s| s.to_string()),
        Command::Solve => cmd_solve(cfg).map(|s| s.to_string()),
        Command::Validate => cmd_validate(cfg).map(|s| s.to_string()),
    }
}
