//! Crate-wide error type and exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input document is not well-formed (offset is a byte position into the input).
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Well-formed input that violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad run configuration; reported before any network call.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Transport or contract failure from an embedding, chat, or scorer backend.
    #[error("provider error: {message}")]
    Provider { message: String, retryable: bool },

    /// Replay provider has no recorded response for the requested key.
    #[error("missing replay fixture for {key}")]
    Fixture { key: String },

    /// Model output did not match the required response schema.
    #[error("structured output rejected: {message}")]
    StructuredOutput { message: String, raw: String },

    /// Prediction and gold files do not cover the same question ids.
    #[error("question ids do not align: {0}")]
    IdMismatch(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn provider(message: impl Into<String>, retryable: bool) -> Self {
        Error::Provider {
            message: message.into(),
            retryable,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Provider { retryable: true, .. })
    }

    /// Process exit code for the CLI: 2 config, 3 input/output, 4 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Validation(_) | Error::Io { .. } | Error::IdMismatch(_) => 3,
            Error::Provider { .. } | Error::Fixture { .. } | Error::StructuredOutput { .. } => 4,
        }
    }
}
