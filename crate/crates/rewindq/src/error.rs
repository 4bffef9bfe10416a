//! Error type shared across the crate.

use thiserror::Error;

/// Unified error type for all fallible operations in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An input failed a mathematical validity check (non-unitary gate,
    /// non-Hermitian observable, non-CPTP channel, …).
    #[error("validation failed: {0}")]
    Validation(String),

    /// Matrix or register shapes are incompatible.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An experiment or planner configuration is self-inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A simulation would exceed a resource cap (qubit count, bond dimension).
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    /// A gate layout is outside what a back-end supports (e.g. a long-range
    /// gate handed to the nearest-neighbour MPS engine).
    #[error("unsupported circuit topology: {0}")]
    UnsupportedTopology(String),

    /// A numerical routine failed to converge or returned non-finite data.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A regression had too few usable points or an otherwise degenerate
    /// input window.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed JSON input or unserializable output.
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
