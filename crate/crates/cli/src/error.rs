//! CLI error classes and their exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("numerical non-convergence: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Model(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

/// Wraps a core error with the name of the config field or stage it came from.
pub fn model_err(ctx: &str) -> impl Fn(pdmp_core::Error) -> CliError + '_ {
    move |e| match e {
        pdmp_core::Error::NonConvergent(m) => CliError::NonConvergence(format!("{ctx}: {m}")),
        e => CliError::Model(format!("{ctx}: {e}")),
    }
}

pub fn io_err(ctx: impl std::fmt::Display) -> impl Fn(std::io::Error) -> CliError {
    move |e| CliError::Io(format!("{ctx}: {e}"))
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
