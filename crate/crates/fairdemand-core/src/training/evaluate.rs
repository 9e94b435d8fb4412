//! Test-split evaluation into a [`FairnessReport`]: MAE/RMSE on denormalized
//! predictions plus per-attribute correlation and prediction accuracy gap.

use crate::autodiff::{Bindings, ExprGraph, NodeId, Tensor};
use crate::dataset::{GroupLabeling, Normalizer, ProtectedAttributeTable, WindowedSamples};
use crate::error::{Error, Result};
use crate::fairness::{ape, mae as mae_of, pag_named, pearson, rmse as rmse_of, AttrMetrics, FairnessReport};
use crate::models::ForecastModel;

/// How the per-(node, time) errors are combined into test-set Corr/PAG:
/// per-forecast-step metrics averaged across steps (the default), or one
/// pooled computation over all node-time pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorPooling {
    PerStep,
    Pooled,
}

/// Reusable eager forward evaluator: one graph, rebound per window.
pub struct Predictor {
    graph: ExprGraph,
    x_in: NodeId,
    pred: NodeId,
    base: Bindings,
}

impl Predictor {
    pub fn new(model: &ForecastModel) -> Result<Self> {
        let mut g = ExprGraph::new();
        let params = model.declare_params(&mut g);
        let x_in = g.input(&[model.n_nodes, model.cfg.k]);
        let pred = model.forward_expr(&mut g, &params, x_in, None)?;
        let probe = g.mean(pred)?;
        g.set_output(probe)?;
        // Parameters are fixed at evaluation time; rebind only the window.
        let mut base = Bindings::new();
        for (node, param) in params.iter().zip(model.params()) {
            base.insert(*node, param.value.clone());
        }
        Ok(Predictor {
            graph: g,
            x_in,
            pred,
            base,
        })
    }

    /// Normalized `[N, M]` prediction for one raw window (normalization
    /// applied internally).
    pub fn predict_norm(&mut self, x_raw: &Tensor, normalizer: &Normalizer) -> Result<Tensor> {
        let mut b = self.base.clone();
        b.insert(self.x_in, normalizer.normalize(x_raw));
        self.graph.evaluate(&b)?;
        Ok(self.graph.value(self.pred)?.clone())
    }
}

/// Evaluate a trained model on held-out windows. Metrics are computed on
/// denormalized values; Corr and PAG follow the configured pooling.
pub fn evaluate(
    model: &ForecastModel,
    model_name: &str,
    lambda: f64,
    windows: &WindowedSamples,
    table: &ProtectedAttributeTable,
    labeling: &GroupLabeling,
    normalizer: &Normalizer,
    pooling: ErrorPooling,
) -> Result<FairnessReport> {
    if windows.samples.is_empty() {
        return Err(Error::Validation("no evaluation windows".into()));
    }
    let q = table.n_attributes();
    let n = model.n_nodes;
    let m = model.cfg.m;
    let mut predictor = Predictor::new(model)?;

    let mut all_truth: Vec<f64> = Vec::new();
    let mut all_pred: Vec<f64> = Vec::new();
    // Per-step accumulators.
    let mut corr_sum = vec![0.0; q];
    let mut corr_count = vec![0usize; q];
    let mut pag_sum = vec![0.0; q];
    let mut pag_count = vec![0usize; q];
    // Pooled accumulators.
    let mut pooled_e: Vec<f64> = Vec::new();
    let mut pooled_mask: Vec<bool> = Vec::new();
    let mut pooled_len = 0usize;

    for window in &windows.samples {
        let pred_norm = predictor.predict_norm(&window.x, normalizer)?;
        let pred_den = normalizer.denormalize(&pred_norm);
        for step in 0..m {
            let truth: Vec<f64> = (0..n).map(|i| window.y.get2(i, step)).collect();
            let pred: Vec<f64> = (0..n).map(|i| pred_den.get2(i, step)).collect();
            all_truth.extend_from_slice(&truth);
            all_pred.extend_from_slice(&pred);
            let acc = ape(&truth, &pred)?;
            match pooling {
                ErrorPooling::PerStep => {
                    for j in 0..q {
                        if let Ok(r) = pearson(&acc, &table.attribute(j)) {
                            corr_sum[j] += r;
                            corr_count[j] += 1;
                        }
                        if !labeling.degenerate[j] {
                            if let Ok(p) = pag_named(&acc, labeling, j, &table.names[j]) {
                                pag_sum[j] += p;
                                pag_count[j] += 1;
                            }
                        }
                    }
                }
                ErrorPooling::Pooled => {
                    pooled_e.extend_from_slice(&acc.e);
                    pooled_mask.extend_from_slice(&acc.mask);
                    pooled_len += 1;
                }
            }
        }
    }

    let mut attrs = Vec::with_capacity(q);
    match pooling {
        ErrorPooling::PerStep => {
            for j in 0..q {
                attrs.push(AttrMetrics {
                    name: table.names[j].clone(),
                    corr: (corr_count[j] > 0).then(|| corr_sum[j] / corr_count[j] as f64),
                    pag_pct: (pag_count[j] > 0).then(|| pag_sum[j] / pag_count[j] as f64),
                    degenerate: labeling.degenerate[j],
                });
            }
        }
        ErrorPooling::Pooled => {
            let acc = crate::fairness::AccuracyVector {
                e: pooled_e,
                mask: pooled_mask,
            };
            // Tile the attribute and labels across the pooled steps.
            let tiled_labeling = tile_labeling(labeling, pooled_len);
            for j in 0..q {
                let z = table.attribute(j);
                let tiled_z: Vec<f64> = std::iter::repeat(&z)
                    .take(pooled_len)
                    .flat_map(|v| v.iter().copied())
                    .collect();
                let corr = pearson(&acc, &tiled_z).ok();
                let pag = if labeling.degenerate[j] {
                    None
                } else {
                    pag_named(&acc, &tiled_labeling, j, &table.names[j]).ok()
                };
                attrs.push(AttrMetrics {
                    name: table.names[j].clone(),
                    corr,
                    pag_pct: pag,
                    degenerate: labeling.degenerate[j],
                });
            }
        }
    }

    let mae = mae_of(&all_truth, &all_pred);
    let rmse = rmse_of(&all_truth, &all_pred);
    debug_assert!(mae <= rmse + 1e-12);
    Ok(FairnessReport {
        model: model_name.to_string(),
        lambda,
        mae,
        rmse,
        attrs,
    })
}

fn tile_labeling(labeling: &GroupLabeling, times: usize) -> GroupLabeling {
    let labels = labeling
        .labels
        .iter()
        .map(|per_attr| {
            std::iter::repeat(per_attr)
                .take(times)
                .flat_map(|v| v.iter().copied())
                .collect()
        })
        .collect();
    GroupLabeling {
        labels,
        thresholds: labeling.thresholds.clone(),
        degenerate: labeling.degenerate.clone(),
    }
}
