use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// Every AP a user could fall back to has reached its service limit.
    #[error("AP capacity exhausted: user {ue} cannot be served")]
    CapacityExhausted { ue: usize },

    #[error("SINR undefined for user {ue}: empty serving set")]
    UndefinedSinr { ue: usize },

    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    #[error("I/O error at {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
