//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// Errors carry strings rather than source errors so that batch APIs can
/// return per-item error slots (`Vec<Result<..>>`) without ownership issues.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input failed validation (bad weights, malformed measures, bad flags).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A node id outside the graph was referenced.
    #[error("unknown node id {0}")]
    UnknownNode(usize),

    /// The graph is not connected; `node` is unreachable from the root.
    #[error("disconnected graph: node {node} is unreachable from root {root}")]
    Disconnected { root: usize, node: usize },

    /// An iterative solver failed to converge.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// A function argument left the numerically representable range.
    #[error("argument out of range: {0}")]
    Range(String),

    /// Problem size exceeds the exact solver's limit.
    #[error("problem too large: {0}")]
    TooLarge(String),

    /// File I/O or parse failure, with the offending path.
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<String>, msg: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
