//! The forecaster zoo behind one forward contract: each kind maps an
//! `[N, K]` history window to an `[N, M]` forecast as a differentiable
//! expression over its parameter inputs. HA has no parameters and ARIMA is
//! initialized by a classical per-node conditional-least-squares fit before
//! its coefficients become trainable tensors.

mod arima;
mod checkpoint;

pub use arima::{difference, fit_all, fit_node, ArimaFit, NodeCoefficients};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::autodiff::{ExprGraph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Model kinds, in the canonical reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ha,
    Mlr,
    Arima,
    Mlp,
    Gru,
    Tgcn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Ha,
        ModelKind::Mlr,
        ModelKind::Arima,
        ModelKind::Mlp,
        ModelKind::Gru,
        ModelKind::Tgcn,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Ha => "ha",
            ModelKind::Mlr => "mlr",
            ModelKind::Arima => "arima",
            ModelKind::Mlp => "mlp",
            ModelKind::Gru => "gru",
            ModelKind::Tgcn => "tgcn",
        }
    }

    pub fn parse(s: &str) -> Result<ModelKind> {
        match s.to_ascii_lowercase().as_str() {
            "ha" => Ok(ModelKind::Ha),
            "mlr" => Ok(ModelKind::Mlr),
            "arima" => Ok(ModelKind::Arima),
            "mlp" => Ok(ModelKind::Mlp),
            "gru" => Ok(ModelKind::Gru),
            "tgcn" | "t-gcn" => Ok(ModelKind::Tgcn),
            other => Err(Error::Validation(format!("unknown model kind '{other}'"))),
        }
    }

    /// Whether the kind has trainable parameters.
    pub fn trainable(&self) -> bool {
        !matches!(self, ModelKind::Ha)
    }

    /// Whether the kind consumes the propagation matrix.
    pub fn needs_graph(&self) -> bool {
        matches!(self, ModelKind::Tgcn)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters of one forecaster; fully serializable for exact replay.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Input horizon length.
    pub k: usize,
    /// Output horizon length.
    pub m: usize,
    /// Hidden width (MLP default 300; GRU/T-GCN default 64).
    pub hidden: usize,
    /// Dropout rate after the MLP hidden layer.
    pub dropout: f64,
    /// Preferred optimizer step size; copied into the train config by callers.
    pub learning_rate: f64,
    /// ARIMA orders (p, d, q).
    pub arima: (usize, usize, usize),
    /// Seed for parameter initialization and dropout masks.
    pub seed: u64,
    /// Ablation switch: keep the MLP hidden layer literally linear.
    pub linear_hidden: bool,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        ModelConfig {
            kind,
            k: 12,
            m: 1,
            hidden: match kind {
                ModelKind::Mlp => 300,
                ModelKind::Gru | ModelKind::Tgcn => 64,
                _ => 0,
            },
            dropout: if kind == ModelKind::Mlp { 0.01 } else { 0.0 },
            learning_rate: 1e-3,
            arima: (1, 1, 1),
            seed: 0,
            linear_hidden: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::Validation("K and M must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Validation(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.kind == ModelKind::Arima {
            let (p, d, q) = self.arima;
            if d > 2 {
                return Err(Error::Validation("differencing order above 2 is unsupported".into()));
            }
            if self.k <= d + p.max(q) {
                return Err(Error::Validation(format!(
                    "window K={} too short for ARIMA orders ({p},{d},{q})",
                    self.k
                )));
            }
        }
        if matches!(self.kind, ModelKind::Mlp | ModelKind::Gru | ModelKind::Tgcn)
            && self.hidden == 0
        {
            return Err(Error::Validation("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Inputs needed to construct a model.
pub struct ModelInit<'a> {
    pub n_nodes: usize,
    /// Normalized `[N, T]` training series; required by ARIMA.
    pub train_series: Option<&'a Tensor>,
    /// Propagation matrix; required by T-GCN.
    pub propagation: Option<&'a Tensor>,
}

/// Node ids of a built forward expression.
pub struct ForwardPlan {
    /// Parameter inputs, in the model's parameter order.
    pub params: Vec<NodeId>,
    /// Dropout mask input when the model uses one in train mode.
    pub dropout: Option<NodeId>,
    /// The `[N, M]` normalized prediction.
    pub prediction: NodeId,
}

/// A forecaster: configuration, parameter tensors, and whatever static
/// inputs its forward pass needs. Immutable between optimizer steps.
#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub cfg: ModelConfig,
    pub n_nodes: usize,
    params: Vec<Param>,
    propagation: Option<Tensor>,
    /// Nodes whose ARIMA fit fell back to zeroed dynamics.
    pub arima_fallback_nodes: usize,
}

impl ForecastModel {
    pub fn new(cfg: ModelConfig, init: &ModelInit) -> Result<Self> {
        cfg.validate()?;
        let n = init.n_nodes;
        if n == 0 {
            return Err(Error::Validation("model needs at least one node".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let mut params = Vec::new();
        let mut fallback_nodes = 0;
        let mut propagation = None;
        match cfg.kind {
            ModelKind::Ha => {}
            ModelKind::Mlr => {
                params.push(init_param("b_weights", &[cfg.k, cfg.m], cfg.k, &mut rng));
                params.push(Param {
                    name: "b_bias".into(),
                    value: Tensor::zeros(&[1, cfg.m]),
                });
            }
            ModelKind::Arima => {
                let series = init.train_series.ok_or_else(|| {
                    Error::Validation("ARIMA needs the training series at construction".into())
                })?;
                if series.shape()[0] != n {
                    return Err(Error::Validation(format!(
                        "training series has {} nodes, expected {n}",
                        series.shape()[0]
                    )));
                }
                let (p, d, q) = cfg.arima;
                let t = series.shape()[1];
                let fit = fit_all(series.data(), n, t, p, d, q)?;
                fallback_nodes = fit.fallback_nodes();
                let column = |pick: &dyn Fn(&NodeCoefficients) -> f64| -> Tensor {
                    Tensor::column(&fit.nodes.iter().map(|c| pick(c)).collect::<Vec<_>>())
                };
                params.push(Param {
                    name: "intercept".into(),
                    value: column(&|c| c.intercept),
                });
                for l in 0..p {
                    params.push(Param {
                        name: format!("ar{}", l + 1),
                        value: column(&|c| c.ar[l]),
                    });
                }
                for l in 0..q {
                    params.push(Param {
                        name: format!("ma{}", l + 1),
                        value: column(&|c| c.ma[l]),
                    });
                }
            }
            ModelKind::Mlp => {
                params.push(init_param("w1", &[cfg.k, cfg.hidden], cfg.k, &mut rng));
                params.push(Param {
                    name: "b1".into(),
                    value: Tensor::zeros(&[1, cfg.hidden]),
                });
                params.push(init_param("w2", &[cfg.hidden, cfg.m], cfg.hidden, &mut rng));
                params.push(Param {
                    name: "b2".into(),
                    value: Tensor::zeros(&[1, cfg.m]),
                });
            }
            ModelKind::Gru => {
                push_gru_params(&mut params, 1, cfg.hidden, &mut rng);
            }
            ModelKind::Tgcn => {
                let prop = init.propagation.ok_or_else(|| {
                    Error::Validation("T-GCN needs a propagation matrix".into())
                })?;
                if prop.shape() != [n, n] {
                    return Err(Error::Validation(format!(
                        "propagation matrix shape {:?} does not match {n} nodes",
                        prop.shape()
                    )));
                }
                propagation = Some(prop.clone());
                params.push(Param {
                    name: "theta".into(),
                    value: Tensor::filled(&[1, 1], 1.0),
                });
                push_gru_params(&mut params, 1, cfg.hidden, &mut rng);
            }
        }
        Ok(ForecastModel {
            cfg,
            n_nodes: n,
            params,
            propagation,
            arima_fallback_nodes: fallback_nodes,
        })
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn set_params(&mut self, values: Vec<Tensor>) {
        debug_assert_eq!(values.len(), self.params.len());
        for (p, v) in self.params.iter_mut().zip(values) {
            debug_assert_eq!(p.value.shape(), v.shape());
            p.value = v;
        }
    }

    pub fn param_values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Swap in a reloaded parameter list wholesale (checkpoint path).
    pub fn replace_params(&mut self, params: Vec<Param>) -> Result<()> {
        for p in &params {
            if !p.value.is_finite() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} holds non-finite values",
                    p.name
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn propagation(&self) -> Option<&Tensor> {
        self.propagation.as_ref()
    }

    /// Shape of the dropout mask bound per sample, when the kind uses one.
    pub fn dropout_mask_shape(&self) -> Option<Vec<usize>> {
        (self.cfg.kind == ModelKind::Mlp && self.cfg.dropout > 0.0)
            .then(|| vec![self.n_nodes, self.cfg.hidden])
    }

    /// Declare one input node per parameter.
    pub fn declare_params(&self, g: &mut ExprGraph) -> Vec<NodeId> {
        self.params.iter().map(|p| g.input(p.value.shape())).collect()
    }

    /// Build the forward expression mapping the `[N, K]` window input to the
    /// `[N, M]` normalized prediction. `dropout` is only consulted by kinds
    /// that use one; pass `None` at evaluation time.
    pub fn forward_expr(
        &self,
        g: &mut ExprGraph,
        params: &[NodeId],
        x: NodeId,
        dropout: Option<NodeId>,
    ) -> Result<NodeId> {
        let n = self.n_nodes;
        let (k, m) = (self.cfg.k, self.cfg.m);
        if g.shape(x) != [n, k] {
            return Err(Error::GraphBuild(format!(
                "window input shape {:?} does not match N={n}, K={k}",
                g.shape(x)
            )));
        }
        match self.cfg.kind {
            ModelKind::Ha => {
                // Every output column is the row-wise mean of the window.
                let averager = g.constant(Tensor::filled(&[k, m], 1.0 / k as f64));
                g.matmul(x, averager)
            }
            ModelKind::Mlr => {
                let xb = g.matmul(x, params[0])?;
                let bias = g.broadcast(params[1], &[n, m])?;
                g.add(xb, bias)
            }
            ModelKind::Arima => self.arima_forward(g, params, x),
            ModelKind::Mlp => {
                let a1 = g.matmul(x, params[0])?;
                let b1 = g.broadcast(params[1], &[n, self.cfg.hidden])?;
                let pre = g.add(a1, b1)?;
                let h = if self.cfg.linear_hidden { pre } else { relu(g, pre)? };
                let hd = match dropout {
                    Some(mask) => g.mul(h, mask)?,
                    None => h,
                };
                let a2 = g.matmul(hd, params[2])?;
                let b2 = g.broadcast(params[3], &[n, m])?;
                g.add(a2, b2)
            }
            ModelKind::Gru => self.recurrent_forward(g, params, x, None),
            ModelKind::Tgcn => {
                let prop = g.constant(
                    self.propagation
                        .clone()
                        .ok_or_else(|| Error::GraphBuild("T-GCN without propagation".into()))?,
                );
                self.recurrent_forward(g, &params[1..], x, Some((prop, params[0])))
            }
        }
    }

    /// Shared GRU/T-GCN recurrence over the window columns, followed by the
    /// readout and iterative feed-forward of predictions for M > 1.
    fn recurrent_forward(
        &self,
        g: &mut ExprGraph,
        cell: &[NodeId],
        x: NodeId,
        conv: Option<(NodeId, NodeId)>,
    ) -> Result<NodeId> {
        let n = self.n_nodes;
        let (k, m, h_dim) = (self.cfg.k, self.cfg.m, self.cfg.hidden);
        let mut h = g.constant(Tensor::zeros(&[n, h_dim]));
        let mix = |g: &mut ExprGraph, col: NodeId| -> Result<NodeId> {
            match conv {
                Some((prop, theta)) => {
                    let spread = g.matmul(prop, col)?;
                    g.matmul(spread, theta)
                }
                None => Ok(col),
            }
        };
        for step in 0..k {
            let sel = g.constant(one_hot_column(k, step));
            let col = g.matmul(x, sel)?;
            let input = mix(g, col)?;
            h = gru_step(g, cell, input, h, n, h_dim)?;
        }
        let (w_o, b_o) = (cell[9], cell[10]);
        let mut outputs = Vec::with_capacity(m);
        for step in 0..m {
            let raw = g.matmul(h, w_o)?;
            let bias = g.broadcast(b_o, &[n, 1])?;
            let y = g.add(raw, bias)?;
            outputs.push(y);
            if step + 1 < m {
                let input = mix(g, y)?;
                h = gru_step(g, cell, input, h, n, h_dim)?;
            }
        }
        if m == 1 {
            return Ok(outputs[0]);
        }
        let mut acc: Option<NodeId> = None;
        for (step, &y) in outputs.iter().enumerate() {
            let place = g.constant(one_hot_row(m, step));
            let spread = g.matmul(y, place)?;
            acc = Some(match acc {
                Some(prev) => g.add(prev, spread)?,
                None => spread,
            });
        }
        Ok(acc.expect("m >= 1"))
    }

    /// Differenced-series residual recursion and iterative forecast with the
    /// per-node ARIMA coefficient columns as parameters.
    fn arima_forward(&self, g: &mut ExprGraph, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let n = self.n_nodes;
        let (k, m) = (self.cfg.k, self.cfg.m);
        let (p, d, q) = self.cfg.arima;
        let intercept = params[0];
        let ar: Vec<NodeId> = params[1..1 + p].to_vec();
        let ma: Vec<NodeId> = params[1 + p..1 + p + q].to_vec();

        // Difference the window d times via constant matrices.
        let mut w = x;
        let mut width = k;
        for _ in 0..d {
            let dm = g.constant(diff_matrix(width));
            w = g.matmul(w, dm)?;
            width -= 1;
        }
        // Columns of the differenced window.
        let mut wcols = Vec::with_capacity(width);
        for t in 0..width {
            let sel = g.constant(one_hot_column(width, t));
            wcols.push(g.matmul(w, sel)?);
        }
        let zero_col = g.constant(Tensor::zeros(&[n, 1]));
        // Residuals, conditioning the first max(p, q) on zero.
        let start = p.max(q);
        let mut eps: Vec<NodeId> = vec![zero_col; width];
        for t in start..width {
            let mut pred = intercept;
            for (l, &phi) in ar.iter().enumerate() {
                let term = g.mul(phi, wcols[t - l - 1])?;
                pred = g.add(pred, term)?;
            }
            for (l, &theta) in ma.iter().enumerate() {
                let term = g.mul(theta, eps[t - l - 1])?;
                pred = g.add(pred, term)?;
            }
            eps[t] = g.sub(wcols[t], pred)?;
        }
        // Iterative forecast on the differenced scale; future residuals are
        // zero by conditional expectation.
        let mut w_hist = wcols;
        let mut eps_hist = eps;
        let mut w_preds = Vec::with_capacity(m);
        for _ in 0..m {
            let mut pred = intercept;
            let len = w_hist.len();
            for (l, &phi) in ar.iter().enumerate() {
                let term = g.mul(phi, w_hist[len - l - 1])?;
                pred = g.add(pred, term)?;
            }
            let elen = eps_hist.len();
            for (l, &theta) in ma.iter().enumerate() {
                let term = g.mul(theta, eps_hist[elen - l - 1])?;
                pred = g.add(pred, term)?;
            }
            w_preds.push(pred);
            w_hist.push(pred);
            eps_hist.push(zero_col);
        }
        // Undo the differencing with the window's trailing values.
        let col_of = |g: &mut ExprGraph, idx: usize| -> Result<NodeId> {
            let sel = g.constant(one_hot_column(k, idx));
            g.matmul(x, sel)
        };
        let mut forecasts = Vec::with_capacity(m);
        match d {
            0 => forecasts = w_preds,
            1 => {
                let mut last = col_of(g, k - 1)?;
                for wp in w_preds {
                    last = g.add(last, wp)?;
                    forecasts.push(last);
                }
            }
            2 => {
                let xk1 = col_of(g, k - 1)?;
                let xk2 = col_of(g, k - 2)?;
                let mut slope = g.sub(xk1, xk2)?;
                let mut last = xk1;
                for wp in w_preds {
                    slope = g.add(slope, wp)?;
                    last = g.add(last, slope)?;
                    forecasts.push(last);
                }
            }
            _ => unreachable!("validated d <= 2"),
        }
        if m == 1 {
            return Ok(forecasts[0]);
        }
        let mut acc: Option<NodeId> = None;
        for (step, &y) in forecasts.iter().enumerate() {
            let place = g.constant(one_hot_row(m, step));
            let spread = g.matmul(y, place)?;
            acc = Some(match acc {
                Some(prev) => g.add(prev, spread)?,
                None => spread,
            });
        }
        Ok(acc.expect("m >= 1"))
    }

    /// Evaluate the forward pass eagerly for one window.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = ExprGraph::new();
        let params = self.declare_params(&mut g);
        let x_in = g.input(&[self.n_nodes, self.cfg.k]);
        let pred = self.forward_expr(&mut g, &params, x_in, None)?;
        let probe = g.mean(pred)?;
        g.set_output(probe)?;
        let mut bindings = crate::autodiff::Bindings::new();
        for (node, param) in params.iter().zip(self.params.iter()) {
            bindings.insert(*node, param.value.clone());
        }
        bindings.insert(x_in, x.clone());
        g.evaluate(&bindings)?;
        Ok(g.value(pred)?.clone())
    }
}

fn push_gru_params(params: &mut Vec<Param>, input_dim: usize, hidden: usize, rng: &mut ChaCha20Rng) {
    for gate in ["z", "r", "h"] {
        params.push(init_param(&format!("w_{gate}"), &[input_dim, hidden], input_dim, rng));
        params.push(init_param(&format!("u_{gate}"), &[hidden, hidden], hidden, rng));
        params.push(Param {
            name: format!("b_{gate}"),
            value: Tensor::zeros(&[1, hidden]),
        });
    }
    params.push(init_param("w_out", &[hidden, 1], hidden, rng));
    params.push(Param {
        name: "b_out".into(),
        value: Tensor::zeros(&[1, 1]),
    });
}

fn init_param(name: &str, shape: &[usize], fan_in: usize, rng: &mut ChaCha20Rng) -> Param {
    let bound = (1.0 / fan_in.max(1) as f64).sqrt();
    let mut value = Tensor::zeros(shape);
    for v in value.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    Param {
        name: name.to_string(),
        value,
    }
}

/// `(u + |u|) / 2`, composed from the closed operation set.
pub fn relu(g: &mut ExprGraph, u: NodeId) -> Result<NodeId> {
    let shape = g.shape(u).to_vec();
    let a = g.abs(u)?;
    let s = g.add(u, a)?;
    let half = g.scalar(0.5);
    let half_b = g.broadcast(half, &shape)?;
    g.mul(s, half_b)
}

/// `u / (1 + |u|)`: a smooth squashing map onto (-1, 1).
pub fn softsign(g: &mut ExprGraph, u: NodeId) -> Result<NodeId> {
    let shape = g.shape(u).to_vec();
    let a = g.abs(u)?;
    let one = g.scalar(1.0);
    let one_b = g.broadcast(one, &shape)?;
    let den = g.add(one_b, a)?;
    g.div(u, den)
}

/// `(1 + softsign(u)) / 2`: a gate onto (0, 1) built from the closed set.
pub fn gate(g: &mut ExprGraph, u: NodeId) -> Result<NodeId> {
    let shape = g.shape(u).to_vec();
    let s = softsign(g, u)?;
    let half = g.scalar(0.5);
    let half_b = g.broadcast(half, &shape)?;
    let scaled = g.mul(s, half_b)?;
    g.add(half_b, scaled)
}

/// One gated-recurrent update: update/reset gates and a squashed candidate.
fn gru_step(
    g: &mut ExprGraph,
    cell: &[NodeId],
    input: NodeId,
    h: NodeId,
    n: usize,
    hidden: usize,
) -> Result<NodeId> {
    let (w_z, u_z, b_z) = (cell[0], cell[1], cell[2]);
    let (w_r, u_r, b_r) = (cell[3], cell[4], cell[5]);
    let (w_h, u_h, b_h) = (cell[6], cell[7], cell[8]);
    let pre = |g: &mut ExprGraph, w: NodeId, u: NodeId, b: NodeId, hh: NodeId| -> Result<NodeId> {
        let xi = g.matmul(input, w)?;
        let hu = g.matmul(hh, u)?;
        let s = g.add(xi, hu)?;
        let bb = g.broadcast(b, &[n, hidden])?;
        g.add(s, bb)
    };
    let z_pre = pre(g, w_z, u_z, b_z, h)?;
    let z = gate(g, z_pre)?;
    let r_pre = pre(g, w_r, u_r, b_r, h)?;
    let r = gate(g, r_pre)?;
    let rh = g.mul(r, h)?;
    let c_pre = pre(g, w_h, u_h, b_h, rh)?;
    let cand = softsign(g, c_pre)?;
    let zh = g.mul(z, h)?;
    let zc = g.mul(z, cand)?;
    let keep = g.sub(h, zh)?;
    g.add(keep, zc)
}

fn one_hot_column(len: usize, idx: usize) -> Tensor {
    let mut t = Tensor::zeros(&[len, 1]);
    t.data_mut()[idx] = 1.0;
    t
}

fn one_hot_row(len: usize, idx: usize) -> Tensor {
    let mut t = Tensor::zeros(&[1, len]);
    t.data_mut()[idx] = 1.0;
    t
}

/// `[w, w-1]` first-difference matrix: column t of the product is
/// `x[t+1] - x[t]`.
fn diff_matrix(width: usize) -> Tensor {
    let mut t = Tensor::zeros(&[width, width - 1]);
    for c in 0..width - 1 {
        t.set2(c, c, -1.0);
        t.set2(c + 1, c, 1.0);
    }
    t
}

pub use checkpoint::{read_checkpoint, write_checkpoint};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_diff_oracle, Bindings};

    fn model(kind: ModelKind, k: usize, m: usize, hidden: usize, n: usize) -> ForecastModel {
        let mut cfg = ModelConfig::new(kind).with_seed(42);
        cfg.k = k;
        cfg.m = m;
        if hidden > 0 {
            cfg.hidden = hidden;
        }
        cfg.dropout = 0.0;
        let init = ModelInit {
            n_nodes: n,
            train_series: None,
            propagation: None,
        };
        ForecastModel::new(cfg, &init).unwrap()
    }

    #[test]
    fn ha_row_means() {
        let ha = model(ModelKind::Ha, 3, 1, 0, 2);
        let x = Tensor::matrix(&[vec![2.0, 4.0, 6.0], vec![5.0, 5.0, 5.0]]).unwrap();
        let y = ha.predict(&x).unwrap();
        assert_eq!(y.get2(0, 0), 4.0);
        assert_eq!(y.get2(1, 0), 5.0);
    }

    #[test]
    fn ha_matches_brute_force_row_mean() {
        let ha = model(ModelKind::Ha, 12, 1, 0, 5);
        let mut x = Tensor::zeros(&[5, 12]);
        for i in 0..5 {
            for j in 0..12 {
                x.set2(i, j, ((i * 31 + j * 7) % 13) as f64);
            }
        }
        let y = ha.predict(&x).unwrap();
        for i in 0..5 {
            let mean = (0..12).map(|j| x.get2(i, j)).sum::<f64>() / 12.0;
            assert!((y.get2(i, 0) - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn mlr_last_lag_selector() {
        let mut mlr = model(ModelKind::Mlr, 3, 1, 0, 2);
        let mut b = Tensor::zeros(&[3, 1]);
        b.set2(2, 0, 1.0);
        mlr.set_params(vec![b, Tensor::zeros(&[1, 1])]);
        let x = Tensor::matrix(&[vec![1.0, 2.0, 3.0], vec![9.0, 8.0, 7.0]]).unwrap();
        let y = mlr.predict(&x).unwrap();
        assert_eq!(y.get2(0, 0), 3.0);
        assert_eq!(y.get2(1, 0), 7.0);
    }

    #[test]
    fn mlr_zero_weights_bias_seven() {
        let mut mlr = model(ModelKind::Mlr, 3, 1, 0, 2);
        mlr.set_params(vec![Tensor::zeros(&[3, 1]), Tensor::filled(&[1, 1], 7.0)]);
        let x = Tensor::matrix(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let y = mlr.predict(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn mlp_zero_weights_output_bias() {
        let mut mlp = model(ModelKind::Mlp, 4, 1, 6, 3);
        let zeros: Vec<Tensor> = mlp
            .param_values()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        mlp.set_params(zeros);
        mlp.params_mut()[3].value = Tensor::filled(&[1, 1], 2.5);
        let x = Tensor::filled(&[3, 4], 1.0);
        let y = mlp.predict(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn gru_zero_input_zero_biases_gives_zero() {
        let mut gru = model(ModelKind::Gru, 4, 1, 3, 2);
        let zeros: Vec<Tensor> = gru
            .param_values()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        gru.set_params(zeros);
        let y = gru.predict(&Tensor::zeros(&[2, 4])).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gru_single_step_matches_hand_computed_cell() {
        // K=1, two hidden units, hand-evaluated gate equations with the
        // softsign-based activations.
        let mut gru = model(ModelKind::Gru, 1, 1, 2, 1);
        let wz = Tensor::row(&[0.5, -0.25]);
        let wr = Tensor::row(&[0.1, 0.2]);
        let wh = Tensor::row(&[1.0, -1.0]);
        let zero_u = Tensor::zeros(&[2, 2]);
        let zero_b = Tensor::zeros(&[1, 2]);
        let wo = Tensor::column(&[1.0, 1.0]);
        let bo = Tensor::filled(&[1, 1], 0.0);
        gru.set_params(vec![
            wz,
            zero_u.clone(),
            zero_b.clone(),
            wr,
            zero_u.clone(),
            zero_b.clone(),
            wh,
            zero_u,
            zero_b,
            wo,
            bo,
        ]);
        let x0 = 2.0;
        let y = gru.predict(&Tensor::matrix(&[vec![x0]]).unwrap()).unwrap();
        // h = 0, so: z = gate(x w_z), cand = softsign(x w_h), h' = z * cand.
        let gate_fn = |v: f64| 0.5 + 0.5 * v / (1.0 + v.abs());
        let soft = |v: f64| v / (1.0 + v.abs());
        let mut expect = 0.0;
        for unit in 0..2 {
            let z = gate_fn(x0 * [0.5, -0.25][unit]);
            let cand = soft(x0 * [1.0, -1.0][unit]);
            expect += z * cand;
        }
        assert!((y.get2(0, 0) - expect).abs() < 1e-12, "{} vs {expect}", y.get2(0, 0));
    }

    fn gradient_check(model: &ForecastModel, x: &Tensor, tol: f64) {
        let n = model.n_nodes;
        let m = model.cfg.m;
        let mut g = ExprGraph::new();
        let params = model.declare_params(&mut g);
        let x_in = g.input(&[n, model.cfg.k]);
        let y_in = g.input(&[n, m]);
        let pred = model.forward_expr(&mut g, &params, x_in, None).unwrap();
        let diff = g.sub(y_in, pred).unwrap();
        let sq = g.mul(diff, diff).unwrap();
        let loss = g.mean(sq).unwrap();
        g.set_output(loss).unwrap();

        let target = Tensor::filled(&[n, m], 0.75);
        let mut bind = Bindings::new();
        for (node, param) in params.iter().zip(model.params()) {
            bind.insert(*node, param.value.clone());
        }
        bind.insert(x_in, x.clone());
        bind.insert(y_in, target.clone());
        g.evaluate(&bind).unwrap();
        let grads = g.gradients(&params).unwrap();

        for (pi, (node, param)) in params.iter().zip(model.params()).enumerate() {
            let analytic = grads.get(*node).unwrap();
            let numeric = finite_diff_oracle(
                |t| {
                    let mut b2 = bind.clone();
                    b2.insert(*node, t.clone());
                    let mut g2 = g.clone();
                    g2.evaluate(&b2)
                },
                &param.value,
                1e-5,
            )
            .unwrap();
            for (a, b) in analytic.data().iter().zip(numeric.data().iter()) {
                let denom = b.abs().max(1e-6);
                assert!(
                    (a - b).abs() / denom < tol,
                    "param {pi} ({}) gradient {a} vs numeric {b}",
                    param.name
                );
            }
        }
    }

    #[test]
    fn mlr_gradients_match_finite_differences() {
        let mlr = model(ModelKind::Mlr, 4, 1, 0, 3);
        let mut x = Tensor::zeros(&[3, 4]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.7).sin();
        }
        gradient_check(&mlr, &x, 1e-5);
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mlp = model(ModelKind::Mlp, 6, 1, 8, 4);
        let mut x = Tensor::zeros(&[4, 6]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 1.3).cos() * 0.8;
        }
        gradient_check(&mlp, &x, 1e-4);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let gru = model(ModelKind::Gru, 5, 1, 4, 3);
        let mut x = Tensor::zeros(&[3, 5]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i * i) as f64 * 0.31).sin();
        }
        gradient_check(&gru, &x, 1e-4);
    }

    #[test]
    fn tgcn_gradients_match_finite_differences_on_ring() {
        let ring = crate::spatial::binary_adjacency(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let prop = crate::spatial::propagation_matrix(&ring);
        let mut cfg = ModelConfig::new(ModelKind::Tgcn).with_seed(5);
        cfg.k = 4;
        cfg.hidden = 3;
        let tgcn = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 4,
                train_series: None,
                propagation: Some(&prop.a_hat),
            },
        )
        .unwrap();
        let mut x = Tensor::zeros(&[4, 4]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i + 1) as f64 * 0.47).sin();
        }
        gradient_check(&tgcn, &x, 1e-4);
    }

    #[test]
    fn tgcn_identity_graph_collapses_to_gru() {
        let gru = model(ModelKind::Gru, 4, 1, 3, 2);
        let ident = Tensor::eye(2);
        let mut cfg = ModelConfig::new(ModelKind::Tgcn).with_seed(42);
        cfg.k = 4;
        cfg.hidden = 3;
        let mut tgcn = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 2,
                train_series: None,
                propagation: Some(&ident),
            },
        )
        .unwrap();
        // theta = [1] plus the GRU's own cell parameters.
        let mut params = vec![Tensor::filled(&[1, 1], 1.0)];
        params.extend(gru.param_values());
        tgcn.set_params(params);
        let mut x = Tensor::zeros(&[2, 4]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f64) * 0.25 - 0.4;
        }
        let a = gru.predict(&x).unwrap();
        let b = tgcn.predict(&x).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn tgcn_symmetric_nodes_get_identical_outputs() {
        let pair = crate::spatial::binary_adjacency(2, &[(0, 1)]).unwrap();
        let prop = crate::spatial::propagation_matrix(&pair);
        let mut cfg = ModelConfig::new(ModelKind::Tgcn).with_seed(3);
        cfg.k = 3;
        cfg.hidden = 4;
        let tgcn = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 2,
                train_series: None,
                propagation: Some(&prop.a_hat),
            },
        )
        .unwrap();
        let x = Tensor::matrix(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        let y = tgcn.predict(&x).unwrap();
        assert_eq!(y.get2(0, 0), y.get2(1, 0));
    }

    #[test]
    fn arima_random_walk_forecasts_last_value() {
        let series = random_series(40, 1);
        let mut cfg = ModelConfig::new(ModelKind::Arima).with_seed(1);
        cfg.k = 6;
        cfg.arima = (0, 1, 0);
        let train = series_tensor(&series);
        let m = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 1,
                train_series: Some(&train),
                propagation: None,
            },
        )
        .unwrap();
        let x = Tensor::matrix(&[vec![3.0, 5.0, 2.0, 8.0, 1.0, 13.0]]).unwrap();
        let y = m.predict(&x).unwrap();
        assert_eq!(y.get2(0, 0), 13.0);
    }

    #[test]
    fn arima_000_forecasts_fitted_mean() {
        let series: Vec<f64> = (0..40).map(|i| 4.0 + ((i % 5) as f64 - 2.0) * 0.1).collect();
        let mut cfg = ModelConfig::new(ModelKind::Arima).with_seed(1);
        cfg.k = 6;
        cfg.arima = (0, 0, 0);
        let train = series_tensor(&series);
        let m = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 1,
                train_series: Some(&train),
                propagation: None,
            },
        )
        .unwrap();
        let x = Tensor::matrix(&[vec![9.0; 6]]).unwrap();
        let y = m.predict(&x).unwrap();
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        assert!((y.get2(0, 0) - mean).abs() < 1e-9);
    }

    #[test]
    fn arima_gradients_match_finite_differences() {
        let series = random_series(60, 9);
        let mut cfg = ModelConfig::new(ModelKind::Arima).with_seed(1);
        cfg.k = 8;
        cfg.arima = (1, 1, 1);
        let train = series_tensor(&series);
        let m = ForecastModel::new(
            cfg,
            &ModelInit {
                n_nodes: 1,
                train_series: Some(&train),
                propagation: None,
            },
        )
        .unwrap();
        let mut x = Tensor::zeros(&[1, 8]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.9).sin() + 2.0;
        }
        gradient_check(&m, &x, 1e-4);
    }

    fn random_series(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x = 5.0;
        (0..len)
            .map(|_| {
                x += rng.gen::<f64>() - 0.5;
                x
            })
            .collect()
    }

    fn series_tensor(series: &[f64]) -> Tensor {
        Tensor::from_vec(vec![1, series.len()], series.to_vec()).unwrap()
    }

    #[test]
    fn mlp_parameter_count_formula() {
        let mlp = model(ModelKind::Mlp, 12, 1, 300, 4);
        assert_eq!(mlp.param_count(), 12 * 300 + 300 + 300 + 1);
    }

    #[test]
    fn forward_determinism_bitwise() {
        let gru = model(ModelKind::Gru, 5, 1, 4, 3);
        let mut x = Tensor::zeros(&[3, 5]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f64 * 0.1).tan();
        }
        let a = gru.predict(&x).unwrap();
        let b = gru.predict(&x).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn permutation_equivariance_mlp() {
        let mlp = model(ModelKind::Mlp, 4, 1, 6, 5);
        let mut x = Tensor::zeros(&[5, 4]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = ((i * 13 % 7) as f64) * 0.3;
        }
        let y = mlp.predict(&x).unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let mut xp = Tensor::zeros(&[5, 4]);
        for (new_i, &old_i) in perm.iter().enumerate() {
            for j in 0..4 {
                xp.set2(new_i, j, x.get2(old_i, j));
            }
        }
        let yp = mlp.predict(&xp).unwrap();
        for (new_i, &old_i) in perm.iter().enumerate() {
            assert_eq!(yp.get2(new_i, 0), y.get2(old_i, 0));
        }
    }
}
