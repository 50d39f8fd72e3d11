use std::process::ExitCode;

use thiserror::Error;

pub const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O error while reading inputs or writing outputs
  2  configuration error (bad config or flags, missing manifest, refused overwrite)
  3  validation failure (invalid manifest line, item media that fails to load,
     undefined correlation)
  4  backend failure budget exceeded (run abandoned, partial output kept)";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("backend failure budget exceeded: {0}")]
    Transport(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Transport(_) => 4,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

pub fn io_err(path: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}
