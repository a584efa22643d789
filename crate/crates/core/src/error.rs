use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: need {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("window has zero variance")]
    ZeroVariance,

    #[error("model fit failed: {0}")]
    FitFailed(String),

    #[error("{0} is outside its domain")]
    Domain(&'static str),

    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical routines rather than of the data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::FitFailed(_) | Error::ZeroVariance | Error::Domain(_))
    }
}
