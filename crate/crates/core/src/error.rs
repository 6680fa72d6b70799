use std::io;

use thiserror::Error;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum GgError {
    /// A caller broke a documented precondition (shape, index range, ...).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Input data is malformed (non-finite values, bad file contents).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration value is out of its legal range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// The candidate graph does not span all nodes.
    #[error("graph is disconnected: node {a} cannot reach node {b}")]
    Disconnected { a: usize, b: usize },
    /// The brute-force oracle was asked for a graph that is too large.
    #[error("oracle size limit exceeded: L = {nodes} > {limit}")]
    OracleSize { nodes: usize, limit: usize },
    #[error("extract from an empty structure")]
    Empty,
    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },
    /// A checked invariant did not hold; maps to exit code 2 in the CLI.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = GgError> = std::result::Result<T, E>;

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::GgError::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;

impl From<serde_json::Error> for GgError {
    fn from(e: serde_json::Error) -> Self {
        GgError::Format(e.to_string())
    }
}

impl From<csv::Error> for GgError {
    fn from(e: csv::Error) -> Self {
        GgError::Format(e.to_string())
    }
}
