//! Crate-wide error type with a stable mapping to CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("affordance error: {0}")]
    Affordance(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code contract: 2 config, 3 I/O, 4 numeric failure, 5 artifact
    /// mismatch. Anything else is an internal error (1).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Affordance(_) | Error::Generation(_) => 2,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Image(_) => 3,
            Error::NonFinite(_) => 4,
            Error::Mismatch(_) | Error::Shape { .. } => 5,
        }
    }

    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }
}
