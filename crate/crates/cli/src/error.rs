use std::fmt;
use std::io;
use std::path::PathBuf;

/// Failure of a CLI command, split by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or expression. Exit code 2.
    Config(String),
    /// The solver rejected the run or produced a non-finite value. Exit code 1.
    Solver(dynkin_core::Error),
    /// Writing an output failed. Exit code 1.
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) | CliError::Io { .. } => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Solver(e) => write!(f, "solver error: {e}"),
            CliError::Io { path, source } => write!(f, "cannot write {}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Config(_) => None,
            CliError::Solver(e) => Some(e),
            CliError::Io { source, .. } => Some(source),
        }
    }
}

impl From<dynkin_core::Error> for CliError {
    fn from(e: dynkin_core::Error) -> Self {
        CliError::Solver(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
