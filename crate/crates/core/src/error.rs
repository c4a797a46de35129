//! Error type shared across the crate.

use thiserror::Error;

/// Unified error for model evaluation, sampling, simulation and IO.
#[derive(Error, Debug)]
pub enum Error {
    /// Configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Data failed validation against the model configuration.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A numeric argument was outside its domain.
    #[error("domain error in {context}: {message}")]
    Domain { context: &'static str, message: String },

    /// A log-density term evaluated to a non-finite value.
    #[error("non-finite value in term `{term}`{detail}")]
    NonFinite { term: String, detail: String },

    /// Parameter vector / state shape did not match the layout.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Sampler failed (bad initialization, step-size search failure, ...).
    #[error("sampler error: {0}")]
    Sampler(String),

    /// File parsing error with location detail.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    /// Underlying IO failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Shorthand for a non-finite term failure.
    pub fn non_finite(term: impl Into<String>) -> Self {
        Error::NonFinite { term: term.into(), detail: String::new() }
    }

    /// Non-finite term failure with extra coordinates.
    pub fn non_finite_at(term: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::NonFinite { term: term.into(), detail: format!(" ({})", detail.into()) }
    }

    /// Wrap an IO error with the offending path.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Parse failure located by path.
    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }

    /// Wrap a JSON error with the offending path.
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
