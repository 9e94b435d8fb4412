//! Differentiable fairness expressions for the training loss.
//!
//! Everything that depends on model predictions is built from graph
//! operations; everything that is constant for a batch step (attribute
//! centering, group selectors, masked counts) is computed eagerly and enters
//! the graph as bound inputs or constants, so no gradient flows through it.

use crate::autodiff::{ExprGraph, NodeId, Tensor};
use crate::dataset::{GroupLabel, GroupLabeling};
use crate::error::{Error, Result};

use super::metrics::pearson_epsilon;

/// Attribute-side constants of the masked Pearson correlation: the centered,
/// re-masked attribute column and its norm.
#[derive(Debug, Clone)]
pub struct MaskedAttrStats {
    /// `(z - mean_masked(z)) * mask`, length N.
    pub zc: Vec<f64>,
    /// `sqrt(sum(zc^2))`.
    pub z_norm: f64,
}

/// Center an attribute over the unmasked nodes and zero the masked entries.
pub fn masked_attr_stats(z: &[f64], mask: &[bool]) -> MaskedAttrStats {
    let count = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let mean = z
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .sum::<f64>()
        / count;
    let zc: Vec<f64> = z
        .iter()
        .zip(mask.iter())
        .map(|(&v, &m)| if m { v - mean } else { 0.0 })
        .collect();
    let z_norm = zc.iter().map(|v| v * v).sum::<f64>().sqrt();
    MaskedAttrStats { zc, z_norm }
}

/// APE as a graph expression. `divisor` must equal the truth where the mask
/// is one and 1.0 elsewhere, so masked entries contribute exact zeros and no
/// gradient.
pub fn ape_expr(
    g: &mut ExprGraph,
    truth_den: NodeId,
    pred_den: NodeId,
    mask: NodeId,
    divisor: NodeId,
) -> Result<NodeId> {
    let diff = g.sub(truth_den, pred_den)?;
    let a = g.abs(diff)?;
    let masked = g.mul(a, mask)?;
    g.div(masked, divisor)
}

/// Masked Pearson correlation of an APE expression against one attribute.
///
/// `inv_n` is `1 / max(1, #unmasked)`, `zc` and `z_norm` come from
/// [`masked_attr_stats`]; all three are batch constants bound as inputs.
pub fn pearson_expr(
    g: &mut ExprGraph,
    e: NodeId,
    mask: NodeId,
    inv_n: NodeId,
    zc: NodeId,
    z_norm: NodeId,
) -> Result<NodeId> {
    let e_shape = g.shape(e).to_vec();
    let se = g.sum(e)?;
    let ebar = g.mul(se, inv_n)?;
    let ebar_col = g.broadcast(ebar, &e_shape)?;
    let centered = g.sub(e, ebar_col)?;
    let ec = g.mul(centered, mask)?;
    let prod = g.mul(ec, zc)?;
    let num = g.sum(prod)?;
    let sq = g.mul(ec, ec)?;
    let ssq = g.sum(sq)?;
    let enorm = g.sqrt(ssq)?;
    let den0 = g.mul(enorm, z_norm)?;
    let eps = g.scalar(pearson_epsilon());
    let den = g.add(den0, eps)?;
    g.div(num, den)
}

/// Quadratic-form multiple correlation `sqrt(c' omega_inv c)` over already
/// built per-attribute correlation nodes. The inverse is constant.
pub fn multiple_corr_expr(
    g: &mut ExprGraph,
    c: &[NodeId],
    omega_inv: &Tensor,
) -> Result<NodeId> {
    let q = c.len();
    if omega_inv.shape() != [q, q] {
        return Err(Error::Validation(format!(
            "omega_inv shape {:?} does not match {q} correlations",
            omega_inv.shape()
        )));
    }
    let mut qf: Option<NodeId> = None;
    for j in 0..q {
        let mut inner: Option<NodeId> = None;
        for k in 0..q {
            let w = g.scalar(omega_inv.get2(j, k));
            let term = g.mul(w, c[k])?;
            inner = Some(match inner {
                Some(acc) => g.add(acc, term)?,
                None => term,
            });
        }
        let term_j = g.mul(c[j], inner.expect("q >= 1"))?;
        qf = Some(match qf {
            Some(acc) => g.add(acc, term_j)?,
            None => term_j,
        });
    }
    g.sqrt(qf.expect("q >= 1"))
}

/// Row selectors averaging over the advantaged / disadvantaged groups.
#[derive(Debug, Clone)]
pub struct GroupSelectors {
    /// `[1, N]` row with `1/N_adv` at advantaged nodes.
    pub adv_mean: Tensor,
    /// `[1, N]` row with `1/N_dis` at disadvantaged nodes.
    pub dis_mean: Tensor,
}

/// Build group-mean selectors for one attribute; empty groups are rejected.
pub fn group_mean_selectors(
    labeling: &GroupLabeling,
    attr: usize,
    attr_name: &str,
) -> Result<GroupSelectors> {
    let labels = &labeling.labels[attr];
    let n = labels.len();
    let adv = labeling.group_indices(attr, GroupLabel::Advantaged);
    let dis = labeling.group_indices(attr, GroupLabel::Disadvantaged);
    if adv.is_empty() {
        return Err(Error::EmptyGroup {
            attr: attr_name.to_string(),
            group: "advantaged",
        });
    }
    if dis.is_empty() {
        return Err(Error::EmptyGroup {
            attr: attr_name.to_string(),
            group: "disadvantaged",
        });
    }
    let mut adv_mean = Tensor::zeros(&[1, n]);
    let mut dis_mean = Tensor::zeros(&[1, n]);
    for &i in &adv {
        adv_mean.set2(0, i, 1.0 / adv.len() as f64);
    }
    for &i in &dis {
        dis_mean.set2(0, i, 1.0 / dis.len() as f64);
    }
    Ok(GroupSelectors { adv_mean, dis_mean })
}

/// The benchmark regularizers compared against the correlation approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    /// Squared difference of group mean predicted demand.
    EqualMean,
    /// Squared difference of group means of per-capita-proxy predictions
    /// (prediction over the node's mean training demand).
    RegionGap,
    /// Mean over cross-group node pairs of squared proxy differences.
    IndividualGap,
}

/// Constants backing a benchmark regularizer for one attribute.
#[derive(Debug, Clone)]
pub struct RegularizerContext {
    pub selectors: GroupSelectors,
    /// `1 / max(1, mean train demand)` per node; used by the gap variants.
    pub inv_train_mean: Tensor,
}

impl RegularizerContext {
    pub fn new(
        labeling: &GroupLabeling,
        attr: usize,
        attr_name: &str,
        train_node_means: &[f64],
    ) -> Result<Self> {
        let selectors = group_mean_selectors(labeling, attr, attr_name)?;
        let inv: Vec<f64> = train_node_means
            .iter()
            .map(|&m| 1.0 / m.max(1.0))
            .collect();
        Ok(RegularizerContext {
            selectors,
            inv_train_mean: Tensor::column(&inv),
        })
    }
}

/// Build the chosen benchmark regularizer over a `[N, 1]` denormalized
/// prediction column. Returns a single-element node, pluggable in place of
/// the correlation term.
pub fn benchmark_regularizer_expr(
    g: &mut ExprGraph,
    kind: RegularizerKind,
    pred_den: NodeId,
    ctx: &RegularizerContext,
) -> Result<NodeId> {
    let adv_sel = g.constant(ctx.selectors.adv_mean.clone());
    let dis_sel = g.constant(ctx.selectors.dis_mean.clone());
    let value = match kind {
        RegularizerKind::EqualMean => pred_den,
        RegularizerKind::RegionGap | RegularizerKind::IndividualGap => {
            let inv = g.constant(ctx.inv_train_mean.clone());
            g.mul(pred_den, inv)?
        }
    };
    match kind {
        RegularizerKind::EqualMean | RegularizerKind::RegionGap => {
            let ma = g.matmul(adv_sel, value)?;
            let md = g.matmul(dis_sel, value)?;
            let d = g.sub(ma, md)?;
            let sq = g.mul(d, d)?;
            g.sum(sq)
        }
        RegularizerKind::IndividualGap => {
            // mean_{i in A, j in D} (p_i - p_j)^2
            //   = E_A[p^2] - 2 E_A[p] E_D[p] + E_D[p^2]
            let p2 = g.mul(value, value)?;
            let ea_p2 = g.matmul(adv_sel, p2)?;
            let ed_p2 = g.matmul(dis_sel, p2)?;
            let ea_p = g.matmul(adv_sel, value)?;
            let ed_p = g.matmul(dis_sel, value)?;
            let cross = g.mul(ea_p, ed_p)?;
            let two = g.constant(Tensor::filled(&[1, 1], 2.0));
            let cross2 = g.mul(two, cross)?;
            let s = g.add(ea_p2, ed_p2)?;
            let out = g.sub(s, cross2)?;
            g.sum(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Bindings;
    use crate::dataset::{label_groups, Direction, ProtectedAttributeTable};
    use crate::fairness::metrics::{ape, pearson, AccuracyVector};

    fn mask_tensor(mask: &[bool]) -> Tensor {
        Tensor::column(&mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect::<Vec<_>>())
    }

    fn divisor_tensor(truth: &[f64], mask: &[bool]) -> Tensor {
        Tensor::column(
            &truth
                .iter()
                .zip(mask.iter())
                .map(|(&t, &m)| if m { t } else { 1.0 })
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn graph_pearson_matches_eager_pearson() {
        let n = 24;
        let truth: Vec<f64> = (0..n)
            .map(|i| if i % 7 == 3 { 0.0 } else { 10.0 + (i as f64 * 1.3).sin() * 5.0 })
            .collect();
        let pred: Vec<f64> = truth.iter().enumerate().map(|(i, &t)| t * (1.0 + 0.05 * ((i * i) as f64).sin())).collect();
        let z: Vec<f64> = (0..n).map(|i| ((i * 37) % 19) as f64 / 19.0).collect();

        let acc: AccuracyVector = ape(&truth, &pred).unwrap();
        let eager = pearson(&acc, &z).unwrap();

        let stats = masked_attr_stats(&z, &acc.mask);
        let unmasked = acc.mask.iter().filter(|&&m| m).count();

        let mut g = ExprGraph::new();
        let t_in = g.input(&[n, 1]);
        let p_in = g.input(&[n, 1]);
        let m_in = g.input(&[n, 1]);
        let d_in = g.input(&[n, 1]);
        let inv_n = g.input(&[]);
        let zc = g.input(&[n, 1]);
        let z_norm = g.input(&[]);
        let e = ape_expr(&mut g, t_in, p_in, m_in, d_in).unwrap();
        let r = pearson_expr(&mut g, e, m_in, inv_n, zc, z_norm).unwrap();
        g.set_output(r).unwrap();

        let mut b = Bindings::new();
        b.insert(t_in, Tensor::column(&truth));
        b.insert(p_in, Tensor::column(&pred));
        b.insert(m_in, mask_tensor(&acc.mask));
        b.insert(d_in, divisor_tensor(&truth, &acc.mask));
        b.insert(inv_n, Tensor::scalar(1.0 / unmasked.max(1) as f64));
        b.insert(zc, Tensor::column(&stats.zc));
        b.insert(z_norm, Tensor::scalar(stats.z_norm));
        let graph_r = g.evaluate(&b).unwrap();
        assert!(
            (graph_r - eager).abs() < 1e-8,
            "graph {graph_r} vs eager {eager}"
        );
    }

    fn labeling_for(n: usize) -> GroupLabeling {
        let values: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let table = ProtectedAttributeTable::new(
            (0..n).map(|i| format!("Z{i}")).collect(),
            vec!["attr".into()],
            vec![Direction::High],
            Tensor::from_vec(vec![n, 1], values).unwrap(),
        )
        .unwrap();
        label_groups(&table).unwrap()
    }

    fn eval_regularizer(kind: RegularizerKind, pred: &[f64], train_means: &[f64]) -> f64 {
        let n = pred.len();
        let labeling = labeling_for(n);
        let ctx = RegularizerContext::new(&labeling, 0, "attr", train_means).unwrap();
        let mut g = ExprGraph::new();
        let p = g.input(&[n, 1]);
        let out = benchmark_regularizer_expr(&mut g, kind, p, &ctx).unwrap();
        g.set_output(out).unwrap();
        let mut b = Bindings::new();
        b.insert(p, Tensor::column(pred));
        g.evaluate(&b).unwrap()
    }

    #[test]
    fn equal_mean_zero_for_identical_group_means() {
        // Nodes 0,1 disadvantaged; 3,4 advantaged (N=5 banding); both mean 15.
        let pred = vec![10.0, 20.0, 7.0, 12.0, 18.0];
        let v = eval_regularizer(RegularizerKind::EqualMean, &pred, &[1.0; 5]);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn equal_mean_of_10_vs_20_is_100() {
        let pred = vec![10.0, 10.0, 0.0, 20.0, 20.0];
        let v = eval_regularizer(RegularizerKind::EqualMean, &pred, &[1.0; 5]);
        assert!((v - 100.0).abs() < 1e-12);
    }

    #[test]
    fn individual_gap_matches_pairwise_enumeration() {
        // 2 advantaged, 2 disadvantaged on N=5; enumerate the 4 cross pairs.
        let pred = vec![3.0, 7.0, 100.0, 11.0, 4.0];
        let means = vec![2.0, 2.0, 2.0, 4.0, 4.0];
        let v = eval_regularizer(RegularizerKind::IndividualGap, &pred, &means);
        let labeling = labeling_for(5);
        let adv = labeling.group_indices(0, GroupLabel::Advantaged);
        let dis = labeling.group_indices(0, GroupLabel::Disadvantaged);
        let proxy: Vec<f64> = pred
            .iter()
            .zip(means.iter())
            .map(|(&p, &m)| p / m.max(1.0))
            .collect();
        let mut acc = 0.0;
        for &i in &adv {
            for &j in &dis {
                let d = proxy[i] - proxy[j];
                acc += d * d;
            }
        }
        let expect = acc / (adv.len() * dis.len()) as f64;
        assert!((v - expect).abs() < 1e-10, "got {v}, expect {expect}");
    }
}
