use thiserror::Error;

/// Crate-wide error type. The variants map onto the CLI exit codes:
/// usage/config problems exit 2, numeric failures exit 3, failed
/// property probes exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("numeric failure: {msg}")]
    NumericFailure { msg: String, best: Option<f64> },
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn numeric(msg: impl Into<String>, best: Option<f64>) -> Self {
        Error::NumericFailure {
            msg: msg.into(),
            best,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 2,
            Error::NumericFailure { .. } | Error::Io(_) => 3,
            Error::CheckFailed(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
