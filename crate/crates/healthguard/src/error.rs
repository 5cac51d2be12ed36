use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

/// Failures surfaced by the command-line front end, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {}", path.display(), source)]
    Config { path: PathBuf, source: ConfigError },
    #[error("{}: {}", path.display(), source)]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {}", path.display(), message)]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] healthguard_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 3,
            _ => 2,
        }
    }

    pub fn io(path: &Path, source: io::Error) -> CliError {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl fmt::Display) -> CliError {
        CliError::Format { path: path.to_path_buf(), message: message.to_string() }
    }
}

/// A config-file problem, with the 1-based line it was found on when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl fmt::Display) -> ConfigError {
        ConfigError { line: Some(line), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}
