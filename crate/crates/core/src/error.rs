use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator and the verification harness.
#[derive(Debug, Error)]
pub enum FrontError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("stability violation: {0}")]
    Stability(String),
    #[error("front escaped the far-field ball at t={time}: zero level reached radius {radius:.4} (guard {guard:.4})")]
    FrontEscape { time: f64, radius: f64, guard: f64 },
    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },
    #[error("parse error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FrontError {
    pub fn parameter(msg: impl Into<String>) -> Self {
        FrontError::Parameter(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        FrontError::Shape(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        FrontError::Format {
            path: path.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T, E = FrontError> = std::result::Result<T, E>;
