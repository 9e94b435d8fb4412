//! Expression graph with reverse-mode differentiation.
//!
//! A graph is built once from a closed set of operations (add, sub, mul, div,
//! matmul, abs, sqrt, mean, sum, broadcast, transpose), then evaluated against
//! bindings for its input nodes. Evaluation caches every intermediate so a
//! single backward sweep can return exact gradients with respect to any subset
//! of the inputs. Nodes are stored in construction order, which is already a
//! topological order: an operation can only consume ids that exist.
//!
//! Anything not in the operation set is composed from it (ReLU from abs,
//! gates from div/abs, quadratic forms from mul/add).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Guard added under every square root so gradients stay finite as the
/// argument approaches zero.
pub const SQRT_EPS: f64 = 1e-12;

/// Identifier of a node in an [`ExprGraph`]. Ids are dense and ascending in
/// construction order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

/// The closed operation set.
#[derive(Debug, Clone)]
enum Op {
    /// Placeholder bound at evaluation time.
    Input,
    /// Embedded constant.
    Const(Tensor),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Abs(NodeId),
    /// Guarded square root: `sqrt(x + SQRT_EPS)`.
    Sqrt(NodeId),
    /// Mean of all elements, reducing to a scalar.
    Mean(NodeId),
    /// Sum of all elements, reducing to a scalar.
    Sum(NodeId),
    /// Expansion of a scalar, `[r,1]` or `[1,c]` tensor to a target shape.
    Broadcast(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Const(_) => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Abs(_) => "abs",
            Op::Sqrt(_) => "sqrt",
            Op::Mean(_) => "mean",
            Op::Sum(_) => "sum",
            Op::Broadcast(_) => "broadcast",
        }
    }
}

/// Bindings from input node ids to concrete tensors.
#[derive(Debug, Clone, Default)]
pub struct Bindings(BTreeMap<NodeId, Tensor>);

impl Bindings {
    pub fn new() -> Self {
        Bindings(BTreeMap::new())
    }

    pub fn insert(&mut self, id: NodeId, value: Tensor) {
        self.0.insert(id, value);
    }

    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.0.get(&id)
    }
}

/// Gradients of the scalar output with respect to requested inputs.
#[derive(Debug, Clone)]
pub struct GradientSet(BTreeMap<NodeId, Tensor>);

impl GradientSet {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.0.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }
}

/// A recorded computation with one scalar output.
#[derive(Debug, Clone, Default)]
pub struct ExprGraph {
    ops: Vec<Op>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Option<Tensor>>,
    output: Option<NodeId>,
}

impl ExprGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.ops.len()
    }

    pub fn output_node(&self) -> Option<NodeId> {
        self.output
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        let id = NodeId(self.ops.len());
        self.ops.push(op);
        self.shapes.push(shape);
        self.values.push(None);
        id
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.shapes[id.0]
    }

    /// Declared shape of a node.
    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.shapes[id.0]
    }

    /// Declare an input of the given shape.
    pub fn input(&mut self, shape: &[usize]) -> NodeId {
        self.push(Op::Input, shape.to_vec())
    }

    /// Embed a constant tensor.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Const(value), shape)
    }

    /// Embed a scalar constant.
    pub fn scalar(&mut self, value: f64) -> NodeId {
        self.constant(Tensor::scalar(value))
    }

    fn binary_same_shape(&mut self, kind: &str, a: NodeId, b: NodeId) -> Result<Vec<usize>> {
        let sa = self.shape_of(a);
        let sb = self.shape_of(b);
        if sa != sb {
            return Err(Error::GraphBuild(format!(
                "{kind}: operands must share a shape, got {:?} (node {}) vs {:?} (node {})",
                sa, a.0, sb, b.0
            )));
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_same_shape("add", a, b)?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_same_shape("sub", a, b)?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_same_shape("mul", a, b)?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.binary_same_shape("div", a, b)?;
        Ok(self.push(Op::Div(a, b), shape))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.shape_of(a).to_vec();
        let sb = self.shape_of(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::GraphBuild(format!(
                "matmul: incompatible shapes {:?} (node {}) x {:?} (node {})",
                sa, a.0, sb, b.0
            )));
        }
        Ok(self.push(Op::MatMul(a, b), vec![sa[0], sb[1]]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let sa = self.shape_of(a).to_vec();
        if sa.len() != 2 {
            return Err(Error::GraphBuild(format!(
                "transpose: rank-2 tensor required, node {} has shape {:?}",
                a.0, sa
            )));
        }
        Ok(self.push(Op::Transpose(a), vec![sa[1], sa[0]]))
    }

    pub fn abs(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.shape_of(a).to_vec();
        Ok(self.push(Op::Abs(a), shape))
    }

    /// Guarded square root `sqrt(x + 1e-12)`.
    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        let shape = self.shape_of(a).to_vec();
        Ok(self.push(Op::Sqrt(a), shape))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let _ = a;
        Ok(self.push(Op::Mean(a), Vec::new()))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let _ = a;
        Ok(self.push(Op::Sum(a), Vec::new()))
    }

    /// Broadcast a scalar-like, `[r,1]` or `[1,c]` tensor to `target`.
    pub fn broadcast(&mut self, a: NodeId, target: &[usize]) -> Result<NodeId> {
        let sa = self.shape_of(a).to_vec();
        let ok = sa.iter().product::<usize>() == 1
            || (sa.len() == 2
                && target.len() == 2
                && ((sa[0] == target[0] && sa[1] == 1) || (sa[0] == 1 && sa[1] == target[1])));
        if !ok {
            return Err(Error::GraphBuild(format!(
                "broadcast: cannot expand {:?} (node {}) to {:?}",
                sa, a.0, target
            )));
        }
        Ok(self.push(Op::Broadcast(a), target.to_vec()))
    }

    /// Designate the scalar output node. Any single-element tensor qualifies.
    pub fn set_output(&mut self, id: NodeId) -> Result<()> {
        let numel: usize = self.shape_of(id).iter().product();
        if numel != 1 {
            return Err(Error::GraphBuild(format!(
                "output node {} has shape {:?}; a single-element tensor is required",
                id.0,
                self.shape_of(id)
            )));
        }
        self.output = Some(id);
        Ok(())
    }

    /// Cached forward value of a node from the latest `evaluate`.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.values[id.0]
            .as_ref()
            .ok_or_else(|| Error::Validation(format!("node {} has no cached value; run evaluate first", id.0)))
    }

    /// Run the forward pass. Caches every intermediate and returns the scalar
    /// output. Rejects missing/mis-shaped bindings and non-finite
    /// intermediates, naming the offending node.
    pub fn evaluate(&mut self, bindings: &Bindings) -> Result<f64> {
        let output = self.output.ok_or(Error::NoOutput)?;
        for i in 0..self.ops.len() {
            let id = NodeId(i);
            let value = match &self.ops[i] {
                Op::Input => {
                    let bound = bindings
                        .get(id)
                        .ok_or(Error::MissingBinding { node: i })?;
                    if bound.shape() != self.shapes[i].as_slice() {
                        return Err(Error::ShapeMismatch {
                            node: i,
                            expected: self.shapes[i].clone(),
                            actual: bound.shape().to_vec(),
                        });
                    }
                    bound.clone()
                }
                Op::Const(t) => t.clone(),
                Op::Add(a, b) => self.val(*a).zip_map(self.val(*b), |x, y| x + y),
                Op::Sub(a, b) => self.val(*a).zip_map(self.val(*b), |x, y| x - y),
                Op::Mul(a, b) => self.val(*a).zip_map(self.val(*b), |x, y| x * y),
                Op::Div(a, b) => self.val(*a).zip_map(self.val(*b), |x, y| x / y),
                Op::MatMul(a, b) => self.val(*a).matmul(self.val(*b)),
                Op::Transpose(a) => self.val(*a).transpose(),
                Op::Abs(a) => self.val(*a).map(f64::abs),
                Op::Sqrt(a) => self.val(*a).map(|x| (x + SQRT_EPS).sqrt()),
                Op::Mean(a) => {
                    let t = self.val(*a);
                    Tensor::scalar(t.sum_all() / t.numel() as f64)
                }
                Op::Sum(a) => Tensor::scalar(self.val(*a).sum_all()),
                Op::Broadcast(a) => broadcast_to(self.val(*a), &self.shapes[i]),
            };
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    op: self.ops[i].name(),
                });
            }
            self.values[i] = Some(value);
        }
        Ok(self.values[output.0].as_ref().unwrap().scalar_value())
    }

    fn val(&self, id: NodeId) -> &Tensor {
        self.values[id.0].as_ref().expect("forward value present")
    }

    /// Reverse accumulation from the scalar output. Requires a prior
    /// successful `evaluate` on the same bindings; deterministic for fixed
    /// bindings.
    pub fn gradients(&self, wrt: &[NodeId]) -> Result<GradientSet> {
        let output = self.output.ok_or(Error::NoOutput)?;
        if self.values[output.0].is_none() {
            return Err(Error::Validation(
                "gradients called before a successful evaluate".into(),
            ));
        }
        for id in wrt {
            match self.ops[id.0] {
                Op::Input => {}
                _ => return Err(Error::NotAnInput { node: id.0 }),
            }
        }

        let mut adjoints: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adjoints[output.0] = Some(Tensor::filled(&self.shapes[output.0], 1.0));

        for i in (0..self.ops.len()).rev() {
            let Some(g) = adjoints[i].take() else {
                continue;
            };
            match &self.ops[i] {
                Op::Input | Op::Const(_) => {
                    // Leaves: keep the adjoint if requested below.
                    if matches!(self.ops[i], Op::Input) && wrt.contains(&NodeId(i)) {
                        adjoints[i] = Some(g);
                    }
                    continue;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut adjoints, *a, g.clone());
                    self.accumulate(&mut adjoints, *b, g);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adjoints, *a, g.clone());
                    self.accumulate(&mut adjoints, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let da = g.zip_map(self.val(*b), |gv, bv| gv * bv);
                    let db = g.zip_map(self.val(*a), |gv, av| gv * av);
                    self.accumulate(&mut adjoints, *a, da);
                    self.accumulate(&mut adjoints, *b, db);
                }
                Op::Div(a, b) => {
                    // c = a / b: dc/da = 1/b, dc/db = -c/b.
                    let c = self.val(NodeId(i));
                    let bv = self.val(*b);
                    let da = g.zip_map(bv, |gv, b| gv / b);
                    let db_part = g.zip_map(c, |gv, cv| -gv * cv);
                    let db = db_part.zip_map(bv, |x, b| x / b);
                    self.accumulate(&mut adjoints, *a, da);
                    self.accumulate(&mut adjoints, *b, db);
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.val(*b).transpose());
                    let db = self.val(*a).transpose().matmul(&g);
                    self.accumulate(&mut adjoints, *a, da);
                    self.accumulate(&mut adjoints, *b, db);
                }
                Op::Transpose(a) => {
                    self.accumulate(&mut adjoints, *a, g.transpose());
                }
                Op::Abs(a) => {
                    // Subgradient 0 at the kink.
                    let da = g.zip_map(self.val(*a), |gv, av| gv * sign_zero(av));
                    self.accumulate(&mut adjoints, *a, da);
                }
                Op::Sqrt(a) => {
                    let c = self.val(NodeId(i));
                    let da = g.zip_map(c, |gv, cv| gv * 0.5 / cv);
                    self.accumulate(&mut adjoints, *a, da);
                }
                Op::Mean(a) => {
                    let n = self.val(*a).numel() as f64;
                    let da = Tensor::filled(self.shape_of(*a), g.scalar_value() / n);
                    self.accumulate(&mut adjoints, *a, da);
                }
                Op::Sum(a) => {
                    let da = Tensor::filled(self.shape_of(*a), g.scalar_value());
                    self.accumulate(&mut adjoints, *a, da);
                }
                Op::Broadcast(a) => {
                    let da = reduce_to(&g, self.shape_of(*a));
                    self.accumulate(&mut adjoints, *a, da);
                }
            }
        }

        let mut out = BTreeMap::new();
        for id in wrt {
            let grad = adjoints[id.0]
                .take()
                .unwrap_or_else(|| Tensor::zeros(&self.shapes[id.0]));
            out.insert(*id, grad);
        }
        Ok(GradientSet(out))
    }

    fn accumulate(&self, adjoints: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        match &mut adjoints[id.0] {
            Some(acc) => acc.add_scaled(&delta, 1.0),
            slot @ None => *slot = Some(delta),
        }
    }
}

fn sign_zero(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn broadcast_to(src: &Tensor, target: &[usize]) -> Tensor {
    if src.numel() == 1 {
        return Tensor::filled(target, src.scalar_value());
    }
    let (r, c) = (target[0], target[1]);
    let mut out = Tensor::zeros(target);
    if src.shape()[1] == 1 {
        // Column vector across columns.
        for i in 0..r {
            let v = src.data()[i];
            for j in 0..c {
                out.set2(i, j, v);
            }
        }
    } else {
        // Row vector down rows.
        for i in 0..r {
            for j in 0..c {
                out.set2(i, j, src.data()[j]);
            }
        }
    }
    out
}

fn reduce_to(g: &Tensor, source: &[usize]) -> Tensor {
    let numel: usize = source.iter().product();
    if numel <= 1 && source.is_empty() {
        return Tensor::scalar(g.sum_all());
    }
    if numel == 1 {
        return Tensor::from_vec(source.to_vec(), vec![g.sum_all()]).unwrap();
    }
    let (r, c) = (g.shape()[0], g.shape()[1]);
    if source[1] == 1 {
        let mut out = Tensor::zeros(source);
        for i in 0..r {
            let mut s = 0.0;
            for j in 0..c {
                s += g.get2(i, j);
            }
            out.data_mut()[i] = s;
        }
        out
    } else {
        let mut out = Tensor::zeros(source);
        for j in 0..c {
            let mut s = 0.0;
            for i in 0..r {
                s += g.get2(i, j);
            }
            out.data_mut()[j] = s;
        }
        out
    }
}
