use std::path::{Path, PathBuf};

/// Failures of a command. Configuration and input problems exit with 2,
/// numerical failures and output errors with 3.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot use input {}: {msg}", path.display())]
    Input { path: PathBuf, msg: String },
    #[error(transparent)]
    Numeric(#[from] detforge_core::Error),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Numeric(_) | CliError::Output { .. } => 3,
        }
    }

    pub(crate) fn input(path: &Path, msg: impl std::fmt::Display) -> Self {
        CliError::Input { path: path.to_path_buf(), msg: msg.to_string() }
    }

    pub(crate) fn output(path: &Path, source: std::io::Error) -> Self {
        CliError::Output { path: path.to_path_buf(), source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
