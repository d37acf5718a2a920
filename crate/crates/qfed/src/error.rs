//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the supported configuration space.
    #[error("configuration error: {0}")]
    Config(String),

    /// A qubit index exceeded the register size.
    #[error("qubit index {qubit} out of range for {num_qubits}-qubit state")]
    QubitIndex { qubit: usize, num_qubits: usize },

    /// An argument violated a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Two observables on the same qubit with different axes cannot be
    /// paired in a metric block.
    #[error("unsupported pairing: {0}")]
    UnsupportedPairing(String),

    /// A binary input file did not match the expected layout.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// The federation received messages inconsistent with its state.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// Training produced non-finite values.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// One or more configuration fields failed validation. All failures
    /// are collected before reporting.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
