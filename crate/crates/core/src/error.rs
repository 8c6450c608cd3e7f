//! Crate-wide error type.

/// Errors surfaced by the toolkit.
///
/// The variants map onto the failure classes used throughout the crate:
/// configuration problems (rejected before any numerics run), numeric
/// failures, API misuse, stale model state, parse failures with a location,
/// and degenerate inputs that make an operation meaningless.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration value (unknown activation, non-positive count, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// Numerical failure (non-finite input, factorization breakdown, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// API misuse (dimension mismatch, empty input, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Model state is missing or inconsistent with the requested operation.
    #[error("state error: {0}")]
    State(String),
    /// Binary parse failure at a byte offset.
    #[error("parse error at byte {offset}: {msg}")]
    ParseAt { offset: u64, msg: String },
    /// Text parse failure at a line number.
    #[error("parse error at line {line}: {msg}")]
    ParseLine { line: usize, msg: String },
    /// Input is degenerate for the requested operation (e.g. all rows equal).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
