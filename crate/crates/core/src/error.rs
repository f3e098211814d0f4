//! Error type shared across the pipeline stages.
//!
//! Each variant maps onto one of the CLI exit codes: configuration problems
//! (2), unreadable or malformed input (3), statistically degenerate data (4),
//! and everything else (5).

use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Configuration file or parameter validation failure.
    #[error("config: {0}")]
    Config(String),

    /// Input file cannot be read.
    #[error("read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: io::Error,
    },

    /// Input file parses but violates the format.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Data refers to cells outside the declared layout.
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    /// NaN or infinite value where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// The sequence carries no usable signal (e.g. zero variance).
    #[error("degenerate sequence: {0}")]
    Degenerate(String),

    /// An operation precondition does not hold.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Artifact cannot be written.
    #[error("write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: io::Error,
    },

    /// Invariant violation inside the pipeline itself.
    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    /// Process exit code for the CLI: 0 ok, 2 config, 3 input, 4 degenerate
    /// data, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Read { .. }
            | Error::Parse { .. }
            | Error::LayoutMismatch(_)
            | Error::NonFinite(_)
            | Error::InvalidInput(_) => 3,
            Error::Degenerate(_) => 4,
            Error::Write { .. } | Error::Internal(_) => 5,
        }
    }
}
