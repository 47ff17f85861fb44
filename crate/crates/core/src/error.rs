use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} out of range [{min}, {max}] for a {width}-bit {kind} word")]
    Range {
        value: i128,
        min: i128,
        max: i128,
        width: u32,
        kind: &'static str,
    },

    #[error("width mismatch: {left} vs {right} bits")]
    WidthMismatch { left: u32, right: u32 },

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("power budget {budget} is infeasible: {reason} (minimum feasible budget is {min_feasible})")]
    InfeasibleBudget {
        budget: f64,
        min_feasible: f64,
        reason: String,
    },

    #[error("parse error in {path}: {field}: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("internal invariant failed: {0}")]
    Invariant(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
