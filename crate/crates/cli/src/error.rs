use std::path::Path;
use std::process::ExitCode;

use pcup_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Config(e.to_string()),
            Error::NonFiniteValue { .. } | Error::Diverged { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

/// Attaches `path` to errors raised while reading or writing it.
pub fn at_path(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match e {
        Error::Io(io) => CliError::Input(format!("{}: {io}", path.display())),
        Error::Parse { .. } => CliError::Input(e.with_path(path).to_string()),
        other => other.into(),
    }
}

pub fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}
