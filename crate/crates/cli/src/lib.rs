//! Command-line front end: scenario configs, subcommands and run artifacts.

pub mod commands;
pub mod config;
pub mod output;

use cautious_core::ErrorKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] cautious_core::Error),
}

impl CliError {
    /// 2 for configuration and input problems, 3 for failed mathematical
    /// preconditions, 4 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Precondition => 3,
                ErrorKind::Solver => 4,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Human,
    Csv,
    JsonLines,
}

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default)]
pub struct GlobalOpts {
    pub seed: Option<u64>,
    pub format: Format,
    pub jobs: Option<usize>,
    pub force: bool,
}
