//! The training loop: mini-batch Adam on the combined loss with gradient
//! clipping and early stopping on validation loss. A run is fully determined
//! by its seed.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::Tensor;
use crate::dataset::{
    GroupLabeling, Normalizer, ProtectedAttributeTable, WindowSample, WindowedSamples,
};
use crate::error::{Error, Result};
use crate::fairness::{
    attribute_corr_matrix, multiple_correlation, ape, AttributeCorrelationMatrix,
};
use crate::models::ForecastModel;

use super::adam::{clip_global_norm, Adam};
use super::loss::{build_loss_graph, FairnessMode, LossConfig, LossGraph};

/// Optimizer and loop settings. The seed fully determines the run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 10,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Validation(
                "learning rate and clip norm must be positive".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Validation(
                "batch size, max epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch record. Wall time is informational and excluded from trajectory
/// comparisons.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_r: f64,
    pub wall_secs: f64,
}

/// The full loop record plus the index of the best validation epoch
/// (1-based).
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Bitwise trajectory equality, ignoring wall time.
    pub fn same_trajectory(&self, other: &TrainHistory) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self
                .epochs
                .iter()
                .zip(other.epochs.iter())
                .all(|(a, b)| {
                    a.train_loss.to_bits() == b.train_loss.to_bits()
                        && a.val_loss.to_bits() == b.val_loss.to_bits()
                        && a.val_r.to_bits() == b.val_r.to_bits()
                })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_r,wall_secs\n");
        for (i, e) in self.epochs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                i + 1,
                e.train_loss,
                e.val_loss,
                e.val_r,
                e.wall_secs
            ));
        }
        out.push_str(&format!("# best_epoch={}\n", self.best_epoch));
        out
    }
}

/// Early-stopping bookkeeping: stop after `patience` epochs without strict
/// improvement, keeping the best epoch's parameters.
#[derive(Debug, Clone)]
pub struct EarlyStopper {
    patience: usize,
    best: f64,
    pub best_epoch: usize,
    counter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            counter: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.counter = 0;
            StopDecision::Improved
        } else {
            self.counter += 1;
            if self.counter >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Everything a training run needs besides the model and its configs. All
/// fields are immutable shared data.
pub struct TrainContext<'a> {
    pub train: &'a WindowedSamples,
    pub val: &'a WindowedSamples,
    pub table: &'a ProtectedAttributeTable,
    pub labeling: &'a GroupLabeling,
    pub omega: &'a AttributeCorrelationMatrix,
    pub normalizer: &'a Normalizer,
    /// Raw-space per-node mean demand over the training split.
    pub train_node_means: &'a [f64],
    /// Normalized `[N, T_train]` series; ARIMA fits on it at construction.
    pub train_series_norm: &'a Tensor,
    /// Propagation matrix for graph-convolutional kinds.
    pub propagation: Option<&'a Tensor>,
}

/// Train a clone of `model` under the combined loss; returns the parameters
/// of the best validation epoch and the loop history.
pub fn train(
    model: &ForecastModel,
    ctx: &TrainContext,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
) -> Result<(ForecastModel, TrainHistory)> {
    loss_cfg.validate()?;
    train_cfg.validate()?;
    if ctx.train.samples.is_empty() || ctx.val.samples.is_empty() {
        return Err(Error::Validation(
            "training and validation windows must be non-empty".into(),
        ));
    }
    let mut model = model.clone();

    // The attribute subset drives both the loss graph and the omega matrix.
    let (sub_table, sub_omega);
    let (table, omega): (&ProtectedAttributeTable, &AttributeCorrelationMatrix) =
        if loss_cfg.mode == FairnessMode::Multi && !loss_cfg.attributes.is_empty() {
            let names: Vec<String> = loss_cfg
                .attributes
                .iter()
                .map(|&j| {
                    ctx.table
                        .names
                        .get(j)
                        .cloned()
                        .ok_or_else(|| Error::Validation(format!("attribute index {j} out of range")))
                })
                .collect::<Result<_>>()?;
            sub_table = ctx.table.select_attributes(&names)?;
            sub_omega = attribute_corr_matrix(&sub_table)?;
            (&sub_table, &sub_omega)
        } else {
            (ctx.table, ctx.omega)
        };
    let sub_cfg = if loss_cfg.mode == FairnessMode::Multi && !loss_cfg.attributes.is_empty() {
        // Indices shift with the sub-table; use all of it.
        LossConfig {
            lambda: loss_cfg.lambda,
            mode: FairnessMode::Multi,
            attributes: Vec::new(),
        }
    } else {
        loss_cfg.clone()
    };

    if !model.cfg.kind.trainable() {
        // Nothing to optimize; record one evaluation epoch for the history.
        let started = Instant::now();
        let mut graphs = GraphCache::new();
        let (val_loss, val_r) = validation_pass(
            &model, ctx, table, omega, &sub_cfg, train_cfg, &mut graphs,
        )?;
        let history = TrainHistory {
            epochs: vec![EpochStats {
                train_loss: val_loss,
                val_loss,
                val_r,
                wall_secs: started.elapsed().as_secs_f64(),
            }],
            best_epoch: 1,
        };
        return Ok((model, history));
    }

    let mut graphs = GraphCache::new();
    let mut rng = ChaCha20Rng::seed_from_u64(train_cfg.seed);
    let mut adam = Adam::new(
        train_cfg.learning_rate,
        &model
            .params()
            .iter()
            .map(|p| p.value.shape().to_vec())
            .collect::<Vec<_>>(),
    );
    let mut stopper = EarlyStopper::new(train_cfg.patience);
    let mut best_params = model.param_values();
    let mut history = TrainHistory::default();

    let n_train = ctx.train.samples.len();
    let mut order: Vec<usize> = (0..n_train).collect();

    for epoch in 1..=train_cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(train_cfg.batch_size).enumerate() {
            let windows: Vec<&WindowSample> =
                chunk.iter().map(|&i| &ctx.train.samples[i]).collect();
            let lg = graphs.get_or_build(
                &model, table, ctx, omega, &sub_cfg, windows.len(), true,
            )?;
            let bindings = lg.bind(
                &model.param_values(),
                &windows,
                table,
                ctx.normalizer,
                model.cfg.dropout,
                &mut rng,
            )?;
            let loss = lg.graph.evaluate(&bindings).map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                },
                other => other,
            })?;
            epoch_loss += loss;
            batches += 1;
            let grads = lg.graph.gradients(&lg.param_nodes)?;
            let mut grad_tensors: Vec<Tensor> = lg
                .param_nodes
                .iter()
                .map(|id| grads.get(*id).expect("gradient for every parameter").clone())
                .collect();
            let norm = clip_global_norm(&mut grad_tensors, train_cfg.clip_norm);
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let mut values = model.param_values();
            adam.step(&mut values, &grad_tensors);
            model.set_params(values);
        }
        let train_loss = epoch_loss / batches.max(1) as f64;

        let (val_loss, val_r) = validation_pass(
            &model, ctx, table, omega, &sub_cfg, train_cfg, &mut graphs,
        )?;
        history.epochs.push(EpochStats {
            train_loss,
            val_loss,
            val_r,
            wall_secs: started.elapsed().as_secs_f64(),
        });
        match stopper.observe(epoch, val_loss) {
            StopDecision::Improved => {
                best_params = model.param_values();
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    history.best_epoch = stopper.best_epoch;
    model.set_params(best_params);
    Ok((model, history))
}

/// Validation loss at the configured lambda plus the mean multiple
/// correlation of the validation predictions (computed eagerly).
fn validation_pass(
    model: &ForecastModel,
    ctx: &TrainContext,
    table: &ProtectedAttributeTable,
    omega: &AttributeCorrelationMatrix,
    loss_cfg: &LossConfig,
    train_cfg: &TrainConfig,
    graphs: &mut GraphCache,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha20Rng::seed_from_u64(0); // dropout is off in eval mode
    let mut weighted_loss = 0.0;
    let mut total = 0usize;
    let mut r_sum = 0.0;
    let mut r_count = 0usize;
    let samples = &ctx.val.samples;
    for chunk in samples.chunks(train_cfg.batch_size) {
        let windows: Vec<&WindowSample> = chunk.iter().collect();
        let lg = graphs.get_or_build(model, table, ctx, omega, loss_cfg, windows.len(), false)?;
        let bindings = lg.bind(
            &model.param_values(),
            &windows,
            table,
            ctx.normalizer,
            0.0,
            &mut rng,
        )?;
        let loss = lg.graph.evaluate(&bindings)?;
        weighted_loss += loss * windows.len() as f64;
        total += windows.len();

        for (slot, window) in lg.prediction_nodes.iter().zip(windows.iter()) {
            let pred_norm = lg.graph.value(*slot)?;
            let pred_den = ctx.normalizer.denormalize(pred_norm);
            for step in 0..model.cfg.m {
                let n = window.y.shape()[0];
                let truth: Vec<f64> = (0..n).map(|i| window.y.get2(i, step)).collect();
                let pred: Vec<f64> = (0..n).map(|i| pred_den.get2(i, step)).collect();
                let acc = ape(&truth, &pred)?;
                if let Ok(mc) = multiple_correlation(&acc, table, omega) {
                    r_sum += mc.r;
                    r_count += 1;
                }
            }
        }
    }
    Ok((
        weighted_loss / total.max(1) as f64,
        r_sum / r_count.max(1) as f64,
    ))
}

/// Cache of loss graphs keyed by batch size and mode; graph construction is
/// deterministic, so reuse keeps epochs cheap.
struct GraphCache {
    graphs: BTreeMap<(usize, bool), LossGraph>,
}

impl GraphCache {
    fn new() -> Self {
        GraphCache {
            graphs: BTreeMap::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn get_or_build(
        &mut self,
        model: &ForecastModel,
        table: &ProtectedAttributeTable,
        ctx: &TrainContext,
        omega: &AttributeCorrelationMatrix,
        loss_cfg: &LossConfig,
        batch: usize,
        train_mode: bool,
    ) -> Result<&mut LossGraph> {
        use std::collections::btree_map::Entry;
        match self.graphs.entry((batch, train_mode)) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(slot) => {
                let lg = build_loss_graph(
                    model,
                    table,
                    ctx.labeling,
                    omega,
                    ctx.normalizer,
                    ctx.train_node_means,
                    loss_cfg,
                    batch,
                    train_mode,
                )?;
                Ok(slot.insert(lg))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopper_contract() {
        // Validation loss improves through epoch 5, then strictly increases:
        // with patience 3 the loop stops at epoch 8 and keeps epoch 5.
        let mut s = EarlyStopper::new(3);
        let losses = [5.0, 4.0, 3.0, 2.0, 1.0, 1.5, 2.5, 3.5];
        let mut stopped_at = 0;
        for (i, &l) in losses.iter().enumerate() {
            let epoch = i + 1;
            if s.observe(epoch, l) == StopDecision::Stop {
                stopped_at = epoch;
                break;
            }
        }
        assert_eq!(stopped_at, 8);
        assert_eq!(s.best_epoch, 5);
    }

    #[test]
    fn early_stopper_requires_strict_improvement() {
        let mut s = EarlyStopper::new(2);
        assert_eq!(s.observe(1, 1.0), StopDecision::Improved);
        assert_eq!(s.observe(2, 1.0), StopDecision::Continue);
        assert_eq!(s.observe(3, 1.0), StopDecision::Stop);
    }
}
