//! Fairness-aware spatiotemporal demand forecasting.
//!
//! The crate trains statistical and neural forecasters under a combined loss
//! `(1 - lambda) * MSE + lambda * R`, where `R` is the differentiable multiple
//! correlation coefficient between per-node absolute percentage error and a
//! set of protected demographic attributes. It bundles:
//!
//! - [`autodiff`]: a small reverse-mode engine with a finite-difference oracle;
//! - [`dataset`]: trip ingestion, demand tensors, splits, windows, group labels;
//! - [`spatial`]: weighted/binary adjacency and graph-convolution normalization;
//! - [`fairness`]: APE, PAG, correlation metrics and benchmark regularizers;
//! - [`models`]: HA, MLR, ARIMA, MLP, GRU and T-GCN behind one forward contract;
//! - [`training`]: the combined loss, Adam with early stopping, and grid search.

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod fairness;
pub mod models;
pub mod spatial;
pub mod training;

pub use error::{Error, Result};
