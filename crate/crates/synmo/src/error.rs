//! Crate-wide error type and the exit-code policy used by the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SynmoError>;

#[derive(Debug, Error)]
pub enum SynmoError {
    /// Mismatched array shapes, joint counts, or channel layouts.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A sequence is too short for the requested operation.
    #[error("sequence too short: {0}")]
    Length(String),

    /// An index referenced a joint, frame, or column that does not exist.
    #[error("index out of range: {0}")]
    Index(String),

    /// A numeric argument violated its documented range or was non-finite.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// Bad CLI usage or an unusable configuration file.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or missing input data (files, corpora, manifests).
    #[error("data error: {0}")]
    Data(String),

    /// Training or sampling produced non-finite values.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SynmoError {
    /// Process exit code: 1 usage/config, 2 data, 3 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            SynmoError::Config(_) => 1,
            SynmoError::Divergence(_) => 3,
            _ => 2,
        }
    }
}
