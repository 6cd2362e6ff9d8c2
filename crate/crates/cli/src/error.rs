use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Config { path: PathBuf, source: serde_json::Error },

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Data { path: PathBuf, source: strcgp::Error },

    #[error(transparent)]
    Core(#[from] strcgp::Error),
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

fn core_code(e: &strcgp::Error) -> i32 {
    use strcgp::Error as E;
    if e.is_numerical() {
        return EXIT_NUMERICAL;
    }
    match e {
        E::Io(_) | E::Parse { .. } | E::DuplicatePoint { .. } | E::GridMismatch(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => EXIT_USAGE,
            CliError::File { .. } => EXIT_IO,
            CliError::Data { source, .. } | CliError::Core(source) => core_code(source),
        }
    }
}

pub fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}
