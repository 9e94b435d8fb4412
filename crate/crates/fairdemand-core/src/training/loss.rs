//! The combined training loss `(1 - lambda) * MSE + lambda * fairness`,
//! assembled as one expression graph per batch size.
//!
//! MSE is computed on normalized values; the fairness term works on
//! denormalized predictions because the percentage error is scale-dependent.
//! The sum over forecast times is realized as a mean over the samples of a
//! mini-batch, with the per-step fairness term averaged over the M forecast
//! steps.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{Bindings, ExprGraph, NodeId, Tensor};
use crate::dataset::{GroupLabeling, Normalizer, ProtectedAttributeTable, WindowSample};
use crate::error::{Error, Result};
use crate::fairness::{
    ape_expr, benchmark_regularizer_expr, masked_attr_stats, multiple_corr_expr, pearson_expr,
    AttributeCorrelationMatrix, RegularizerContext, RegularizerKind, ZERO_DEMAND_FLOOR,
};
use crate::models::ForecastModel;

/// Which fairness term enters the loss.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "attribute")]
pub enum FairnessMode {
    /// No fairness term; forces lambda = 0.
    None,
    /// Multiple correlation coefficient over the attribute subset.
    Multi,
    /// Absolute single-attribute correlation (attribute index).
    Single(usize),
    /// Equal-mean benchmark regularizer (attribute index).
    EqualMean(usize),
    /// Region-based fairness gap benchmark (attribute index).
    RegionGap(usize),
    /// Individual-based fairness gap benchmark (attribute index).
    IndividualGap(usize),
}

impl FairnessMode {
    pub fn benchmark(kind: RegularizerKind, attr: usize) -> Self {
        match kind {
            RegularizerKind::EqualMean => FairnessMode::EqualMean(attr),
            RegularizerKind::RegionGap => FairnessMode::RegionGap(attr),
            RegularizerKind::IndividualGap => FairnessMode::IndividualGap(attr),
        }
    }

    /// The single attribute this mode targets, when it targets one.
    pub fn target_attribute(&self) -> Option<usize> {
        match self {
            FairnessMode::Single(j)
            | FairnessMode::EqualMean(j)
            | FairnessMode::RegionGap(j)
            | FairnessMode::IndividualGap(j) => Some(*j),
            _ => None,
        }
    }
}

/// Loss configuration: the interactive weight and the fairness term.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub mode: FairnessMode,
    /// Attribute indices entering the multi-attribute term; empty means all.
    pub attributes: Vec<usize>,
}

impl LossConfig {
    pub fn accuracy_only() -> Self {
        LossConfig {
            lambda: 0.0,
            mode: FairnessMode::None,
            attributes: Vec::new(),
        }
    }

    pub fn multi(lambda: f64) -> Self {
        LossConfig {
            lambda,
            mode: FairnessMode::Multi,
            attributes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Validation(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if self.mode == FairnessMode::None && self.lambda != 0.0 {
            return Err(Error::Validation(
                "fairness mode 'none' forces lambda = 0".into(),
            ));
        }
        Ok(())
    }
}

/// Constant inputs of the fairness branch for one forecast step of one
/// sample; they depend on the batch data, so they are bound, not embedded.
struct StepNodes {
    truth_den: NodeId,
    mask: NodeId,
    divisor: NodeId,
    /// `1 / max(1, #unmasked)`; present for correlation modes.
    inv_n: Option<NodeId>,
    /// Per attribute: centered-masked column and its norm.
    attrs: Vec<(NodeId, NodeId)>,
}

struct SampleNodes {
    x: NodeId,
    y_norm: NodeId,
    dropout: Option<NodeId>,
    steps: Vec<StepNodes>,
}

/// A reusable combined-loss graph for a fixed batch size.
pub struct LossGraph {
    pub graph: ExprGraph,
    pub param_nodes: Vec<NodeId>,
    /// Normalized `[N, M]` prediction node per sample (for diagnostics).
    pub prediction_nodes: Vec<NodeId>,
    samples: Vec<SampleNodes>,
    batch: usize,
    mode: FairnessMode,
    attr_indices: Vec<usize>,
}

/// Build the combined loss for `batch` samples. `train_mode` controls the
/// dropout input. The attribute subset of `cfg` must match `omega` (the
/// inverse is taken over exactly those attributes, in order).
pub fn build_loss_graph(
    model: &ForecastModel,
    table: &ProtectedAttributeTable,
    labeling: &GroupLabeling,
    omega: &AttributeCorrelationMatrix,
    normalizer: &Normalizer,
    train_node_means: &[f64],
    cfg: &LossConfig,
    batch: usize,
    train_mode: bool,
) -> Result<LossGraph> {
    cfg.validate()?;
    let n = model.n_nodes;
    let (k, m) = (model.cfg.k, model.cfg.m);
    let attr_indices = resolve_attributes(cfg, table)?;
    if cfg.mode == FairnessMode::Multi && omega.q() != attr_indices.len() {
        return Err(Error::Validation(format!(
            "omega is {}x{} but {} attributes are selected",
            omega.q(),
            omega.q(),
            attr_indices.len()
        )));
    }

    let mut g = ExprGraph::new();
    let param_nodes = model.declare_params(&mut g);
    let sigma_col = g.constant(normalizer.std_column());
    let mu_col = g.constant(normalizer.mean_column());

    let reg_ctx = match cfg.mode {
        FairnessMode::EqualMean(j) | FairnessMode::RegionGap(j) | FairnessMode::IndividualGap(j) => {
            Some(RegularizerContext::new(
                labeling,
                j,
                &table.names[j],
                train_node_means,
            )?)
        }
        _ => None,
    };

    let mut samples = Vec::with_capacity(batch);
    let mut prediction_nodes = Vec::with_capacity(batch);
    let mut mse_terms = Vec::with_capacity(batch);
    let mut fair_terms = Vec::with_capacity(batch);

    for _ in 0..batch {
        let x = g.input(&[n, k]);
        let y_norm = g.input(&[n, m]);
        let dropout = if train_mode {
            model.dropout_mask_shape().map(|shape| g.input(&shape))
        } else {
            None
        };
        let pred = model.forward_expr(&mut g, &param_nodes, x, dropout)?;
        prediction_nodes.push(pred);

        let diff = g.sub(y_norm, pred)?;
        let sq = g.mul(diff, diff)?;
        mse_terms.push(g.mean(sq)?);

        let mut steps = Vec::new();
        if cfg.mode != FairnessMode::None {
            let sigma_b = g.broadcast(sigma_col, &[n, m])?;
            let mu_b = g.broadcast(mu_col, &[n, m])?;
            let scaled = g.mul(pred, sigma_b)?;
            let pred_den = g.add(scaled, mu_b)?;

            let mut step_fairs = Vec::with_capacity(m);
            for step in 0..m {
                let sel = g.constant(one_hot_column(m, step));
                let col = g.matmul(pred_den, sel)?;
                let (nodes, fair) = build_step_fairness(
                    &mut g,
                    cfg,
                    &attr_indices,
                    omega,
                    reg_ctx.as_ref(),
                    col,
                    n,
                )?;
                steps.push(nodes);
                step_fairs.push(fair);
            }
            let mut fair_sum = step_fairs[0];
            for &f in &step_fairs[1..] {
                fair_sum = add_scalarish(&mut g, fair_sum, f)?;
            }
            let inv_m = g.scalar(1.0 / m as f64);
            let fair_sum = to_scalar(&mut g, fair_sum)?;
            fair_terms.push(g.mul(fair_sum, inv_m)?);
        }
        samples.push(SampleNodes {
            x,
            y_norm,
            dropout,
            steps,
        });
    }

    let mut mse_sum = mse_terms[0];
    for &t in &mse_terms[1..] {
        mse_sum = g.add(mse_sum, t)?;
    }
    let inv_b = g.scalar(1.0 / batch as f64);
    let mse = g.mul(mse_sum, inv_b)?;

    let loss = if cfg.mode == FairnessMode::None {
        mse
    } else {
        let mut fair_sum = fair_terms[0];
        for &t in &fair_terms[1..] {
            fair_sum = g.add(fair_sum, t)?;
        }
        let inv_b2 = g.scalar(1.0 / batch as f64);
        let fair = g.mul(fair_sum, inv_b2)?;
        let w_acc = g.scalar(1.0 - cfg.lambda);
        let w_fair = g.scalar(cfg.lambda);
        let a = g.mul(w_acc, mse)?;
        let b = g.mul(w_fair, fair)?;
        g.add(a, b)?
    };
    g.set_output(loss)?;

    Ok(LossGraph {
        graph: g,
        param_nodes,
        prediction_nodes,
        samples,
        batch,
        mode: cfg.mode.clone(),
        attr_indices,
    })
}

fn resolve_attributes(cfg: &LossConfig, table: &ProtectedAttributeTable) -> Result<Vec<usize>> {
    let q = table.n_attributes();
    let idx: Vec<usize> = if cfg.attributes.is_empty() {
        (0..q).collect()
    } else {
        cfg.attributes.clone()
    };
    for &j in &idx {
        if j >= q {
            return Err(Error::Validation(format!(
                "attribute index {j} out of range for {q} attributes"
            )));
        }
    }
    if let Some(j) = cfg.mode.target_attribute() {
        if j >= q {
            return Err(Error::Validation(format!(
                "target attribute index {j} out of range for {q} attributes"
            )));
        }
    }
    Ok(idx)
}

fn build_step_fairness(
    g: &mut ExprGraph,
    cfg: &LossConfig,
    attr_indices: &[usize],
    omega: &AttributeCorrelationMatrix,
    reg_ctx: Option<&RegularizerContext>,
    pred_den_col: NodeId,
    n: usize,
) -> Result<(StepNodes, NodeId)> {
    match &cfg.mode {
        FairnessMode::None => unreachable!("no fairness branch for mode none"),
        FairnessMode::Multi | FairnessMode::Single(_) => {
            let truth_den = g.input(&[n, 1]);
            let mask = g.input(&[n, 1]);
            let divisor = g.input(&[n, 1]);
            let inv_n = g.input(&[]);
            let e = ape_expr(g, truth_den, pred_den_col, mask, divisor)?;
            let js: Vec<usize> = match &cfg.mode {
                FairnessMode::Single(j) => vec![*j],
                _ => attr_indices.to_vec(),
            };
            let mut attr_nodes = Vec::with_capacity(js.len());
            let mut c_nodes = Vec::with_capacity(js.len());
            for _ in &js {
                let zc = g.input(&[n, 1]);
                let z_norm = g.input(&[]);
                let r = pearson_expr(g, e, mask, inv_n, zc, z_norm)?;
                attr_nodes.push((zc, z_norm));
                c_nodes.push(r);
            }
            let fair = match &cfg.mode {
                FairnessMode::Single(_) => g.abs(c_nodes[0])?,
                _ => multiple_corr_expr(g, &c_nodes, &omega.omega_inv)?,
            };
            Ok((
                StepNodes {
                    truth_den,
                    mask,
                    divisor,
                    inv_n: Some(inv_n),
                    attrs: attr_nodes,
                },
                fair,
            ))
        }
        FairnessMode::EqualMean(_) | FairnessMode::RegionGap(_) | FairnessMode::IndividualGap(_) => {
            let kind = match cfg.mode {
                FairnessMode::EqualMean(_) => RegularizerKind::EqualMean,
                FairnessMode::RegionGap(_) => RegularizerKind::RegionGap,
                _ => RegularizerKind::IndividualGap,
            };
            let ctx = reg_ctx.expect("regularizer context built for benchmark modes");
            let fair = benchmark_regularizer_expr(g, kind, pred_den_col, ctx)?;
            Ok((
                StepNodes {
                    truth_den: NodeId(usize::MAX),
                    mask: NodeId(usize::MAX),
                    divisor: NodeId(usize::MAX),
                    inv_n: None,
                    attrs: Vec::new(),
                },
                fair,
            ))
        }
    }
}

fn add_scalarish(g: &mut ExprGraph, a: NodeId, b: NodeId) -> Result<NodeId> {
    // Benchmark terms come out [1,1] while correlation terms are scalars;
    // collapse both to plain scalars before mixing.
    let a = to_scalar(g, a)?;
    let b = to_scalar(g, b)?;
    g.add(a, b)
}

fn to_scalar(g: &mut ExprGraph, a: NodeId) -> Result<NodeId> {
    if g.shape(a).is_empty() {
        Ok(a)
    } else {
        g.sum(a)
    }
}

fn one_hot_column(len: usize, idx: usize) -> Tensor {
    let mut t = Tensor::zeros(&[len, 1]);
    t.data_mut()[idx] = 1.0;
    t
}

impl LossGraph {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Bind parameters, one window per sample slot, and the per-step fairness
    /// constants. `rng` drives the dropout masks and must be advanced in the
    /// same order regardless of the loss mode, so runs with different lambdas
    /// stay comparable.
    pub fn bind(
        &self,
        params: &[Tensor],
        windows: &[&WindowSample],
        table: &ProtectedAttributeTable,
        normalizer: &Normalizer,
        dropout_rate: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<Bindings> {
        if windows.len() != self.batch {
            return Err(Error::Validation(format!(
                "bound {} windows to a batch-{} graph",
                windows.len(),
                self.batch
            )));
        }
        let mut b = Bindings::new();
        for (node, value) in self.param_nodes.iter().zip(params.iter()) {
            b.insert(*node, value.clone());
        }
        for (slot, window) in self.samples.iter().zip(windows.iter()) {
            b.insert(slot.x, normalizer.normalize(&window.x));
            b.insert(slot.y_norm, normalizer.normalize(&window.y));
            if let Some(mask_node) = slot.dropout {
                let shape = window.x.shape()[0];
                let hidden = {
                    // Mask shape is [N, hidden]; recover hidden from the graph.
                    let s = self.graph.shape(mask_node);
                    (s[0], s[1])
                };
                debug_assert_eq!(hidden.0, shape);
                let keep = 1.0 - dropout_rate;
                let mut mask = Tensor::zeros(&[hidden.0, hidden.1]);
                for v in mask.data_mut() {
                    *v = if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 };
                }
                b.insert(mask_node, mask);
            }
            for (step, nodes) in slot.steps.iter().enumerate() {
                if nodes.inv_n.is_none() && nodes.attrs.is_empty() {
                    continue; // benchmark regularizer: constants are embedded
                }
                let n = window.y.shape()[0];
                let mut truth = Vec::with_capacity(n);
                for i in 0..n {
                    truth.push(window.y.get2(i, step));
                }
                let mask: Vec<bool> = truth.iter().map(|&t| t >= ZERO_DEMAND_FLOOR).collect();
                let divisor: Vec<f64> = truth
                    .iter()
                    .zip(mask.iter())
                    .map(|(&t, &m)| if m { t } else { 1.0 })
                    .collect();
                let unmasked = mask.iter().filter(|&&m| m).count();
                b.insert(nodes.truth_den, Tensor::column(&truth));
                b.insert(
                    nodes.mask,
                    Tensor::column(
                        &mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
                    ),
                );
                b.insert(nodes.divisor, Tensor::column(&divisor));
                if let Some(inv_n) = nodes.inv_n {
                    b.insert(inv_n, Tensor::scalar(1.0 / unmasked.max(1) as f64));
                }
                let js: Vec<usize> = match &self.mode {
                    FairnessMode::Single(j) => vec![*j],
                    _ => self.attr_indices.clone(),
                };
                for ((zc_node, z_norm_node), &j) in nodes.attrs.iter().zip(js.iter()) {
                    let z = table.attribute(j);
                    let stats = masked_attr_stats(&z, &mask);
                    b.insert(*zc_node, Tensor::column(&stats.zc));
                    b.insert(*z_norm_node, Tensor::scalar(stats.z_norm));
                }
            }
        }
        Ok(b)
    }
}
