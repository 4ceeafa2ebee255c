use thiserror::Error;

/// Failures surfaced to the shell, each with a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Diagnostic(String),

    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diagnostic(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<churnpool::Error> for CliError {
    fn from(e: churnpool::Error) -> Self {
        match e {
            churnpool::Error::Diagnostic(m) => CliError::Diagnostic(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
