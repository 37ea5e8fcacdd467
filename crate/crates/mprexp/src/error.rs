use thiserror::Error;

/// Failures of a command-line run, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(mprexp_core::Error),

    #[error("integrability diagnostic: {0}")]
    Integrability(mprexp_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) | CliError::Csv(_) => 3,
            CliError::Integrability(_) => 4,
        }
    }
}

impl From<mprexp_core::Error> for CliError {
    fn from(e: mprexp_core::Error) -> Self {
        match e {
            mprexp_core::Error::Integrability(_) => CliError::Integrability(e),
            _ => CliError::Numerical(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
