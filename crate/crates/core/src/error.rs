use thiserror::Error;

/// Crate-wide error type. `Validation` maps to exit code 2, `Numerics` to 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerics: {0}")]
    Numerics(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Format(_) | Error::Io(_) => 2,
            Error::Numerics(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
