//! Minimal reverse-mode differentiation engine.
//!
//! Provides exact gradients for every expression the training loss needs:
//! matrix products, elementwise arithmetic, absolute value, guarded square
//! root, reductions and broadcasts. The operation set is closed; richer
//! functions (activations, correlations, quadratic forms) are composed from
//! it by the callers.
//!
//! Independent graphs may be evaluated in parallel; a single graph is
//! exclusive during a forward/backward pass and there is no global state.

mod expr;
mod oracle;
mod tensor;

pub use expr::{Bindings, ExprGraph, GradientSet, NodeId, SQRT_EPS};
pub use oracle::finite_diff_oracle;
pub use tensor::Tensor;
