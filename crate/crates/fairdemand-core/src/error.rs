//! Crate-wide error type.

use thiserror::Error;

/// Common error type for the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape problem detected while building an expression graph.
    #[error("graph build error: {0}")]
    GraphBuild(String),

    /// A binding or intermediate value has a shape other than the declared one.
    #[error("shape mismatch at node {node}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        node: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    /// A forward or backward pass produced NaN/Inf at the given node.
    #[error("non-finite value produced at node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    /// Evaluate was called without a binding for an input node.
    #[error("missing binding for input node {node}")]
    MissingBinding { node: usize },

    /// A gradient was requested for a node that is not an input.
    #[error("node {node} is not an input; gradients are only defined for inputs")]
    NotAnInput { node: usize },

    /// The graph has no scalar output designated.
    #[error("graph has no scalar output set")]
    NoOutput,

    /// Finite-difference oracle failure.
    #[error("finite-difference oracle: {0}")]
    Oracle(String),

    /// CSV / file schema violation with location.
    #[error("{path}:{line}: {detail}")]
    Schema {
        path: String,
        line: u64,
        detail: String,
    },

    /// Input data fails a documented precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Matrix inversion failed even after the ridge.
    #[error("matrix numerically singular (condition number estimate {cond:.3e})")]
    Singular { cond: f64 },

    /// A protected attribute has no variation; group metrics are unavailable.
    #[error("attribute '{0}' is degenerate (no variation across nodes)")]
    DegenerateAttribute(String),

    /// A group is empty after masking; the metric is unavailable, not zero.
    #[error("group '{group}' for attribute '{attr}' is empty after masking")]
    EmptyGroup { attr: String, group: &'static str },

    /// Too few unmasked nodes for a correlation.
    #[error("need at least 2 unmasked nodes, have {have}")]
    TooFewUnmasked { have: usize },

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    /// Checkpoint text could not be parsed.
    #[error("checkpoint parse error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
