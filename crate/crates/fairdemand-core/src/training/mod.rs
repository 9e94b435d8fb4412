//! Training: the combined loss, Adam with gradient clipping and early
//! stopping, test evaluation, and grid search over the fairness weight.
//!
//! A single run is sequential and deterministic given its seed; grid search
//! runs independent configurations in parallel over read-only shared data.

mod adam;
mod evaluate;
mod grid;
mod loss;
mod train;

pub use adam::{clip_global_norm, Adam};
pub use evaluate::{evaluate, ErrorPooling, Predictor};
pub use grid::{grid_search, run_one, GridContext, GridOutcome, GridRow, GridSpec};
pub use loss::{build_loss_graph, FairnessMode, LossConfig, LossGraph};
pub use train::{
    train, EarlyStopper, EpochStats, StopDecision, TrainConfig, TrainContext, TrainHistory,
};
