//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by domain construction, solvers, time maps, and the CLI.
#[derive(Debug, Error)]
pub enum TvError {
    /// Bad geometry or grid parameters (dimension, spacing, radii).
    #[error("domain error: {0}")]
    Domain(String),

    /// A function argument violates its documented precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An iterative solve failed to converge or produced non-finite values.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Time-change construction failed (non-positive phi, route disagreement,
    /// out-of-range query).
    #[error("time map error: {0}")]
    TimeMap(String),

    /// Config-file syntax or validation problem, with a 1-based line number
    /// when one applies (line 0 means the file as a whole).
    #[error("config error (line {line}): {message}")]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl TvError {
    pub fn config(line: usize, message: impl Into<String>) -> Self {
        TvError::Config {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, TvError>;
