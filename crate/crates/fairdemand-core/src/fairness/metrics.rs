//! Per-node accuracy (APE) and the two fairness metrics: prediction accuracy
//! gap and Pearson correlation with the guarded denominator.
//!
//! Correlation metrics never read group labels; only the gap does.

use crate::dataset::{GroupLabel, GroupLabeling};
use crate::error::{Error, Result};

/// Node-time pairs with true demand below this floor are masked from APE and
/// every fairness statistic; the percentage error is undefined at zero and
/// epsilon-inflating the denominator would let near-zero cells dominate.
pub const ZERO_DEMAND_FLOOR: f64 = 1.0;

/// The small constant added to the Pearson denominator (`e^-20`).
#[inline]
pub fn pearson_epsilon() -> f64 {
    (-20.0f64).exp()
}

/// Absolute percentage error per node with a zero-demand mask. Masked
/// entries are excluded from every mean and correlation.
#[derive(Debug, Clone)]
pub struct AccuracyVector {
    pub e: Vec<f64>,
    pub mask: Vec<bool>,
}

impl AccuracyVector {
    pub fn unmasked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// `e_i = |y_true_i - y_pred_i| / y_true_i` where the truth is at least one
/// trip; smaller cells are masked out.
pub fn ape(y_true: &[f64], y_pred: &[f64]) -> Result<AccuracyVector> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Validation(format!(
            "ape: length mismatch {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut e = Vec::with_capacity(y_true.len());
    let mut mask = Vec::with_capacity(y_true.len());
    for (&t, &p) in y_true.iter().zip(y_pred.iter()) {
        if t < ZERO_DEMAND_FLOOR {
            e.push(0.0);
            mask.push(false);
        } else {
            e.push((t - p).abs() / t);
            mask.push(true);
        }
    }
    Ok(AccuracyVector { e, mask })
}

/// Mean APE of the disadvantaged group minus the advantaged group, in
/// percent. The middle band is excluded; a group left empty after masking
/// makes the metric unavailable, never zero.
pub fn pag(e: &AccuracyVector, labeling: &GroupLabeling, attr: usize) -> Result<f64> {
    pag_named(e, labeling, attr, "")
}

fn group_mean(
    e: &AccuracyVector,
    labels: &[GroupLabel],
    which: GroupLabel,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label == which && e.mask[i] {
            sum += e.e[i];
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// [`pag`] with an attribute name used in error reports.
pub fn pag_named(
    e: &AccuracyVector,
    labeling: &GroupLabeling,
    attr: usize,
    name: &str,
) -> Result<f64> {
    if labeling.degenerate[attr] {
        return Err(Error::DegenerateAttribute(name.to_string()));
    }
    let labels = &labeling.labels[attr];
    let dis = group_mean(e, labels, GroupLabel::Disadvantaged).ok_or(Error::EmptyGroup {
        attr: name.to_string(),
        group: "disadvantaged",
    })?;
    let adv = group_mean(e, labels, GroupLabel::Advantaged).ok_or(Error::EmptyGroup {
        attr: name.to_string(),
        group: "advantaged",
    })?;
    Ok((dis - adv) * 100.0)
}

/// Two-pass Pearson correlation over a pair of plain vectors with the
/// guarded denominator. Returns 0 for constant inputs.
pub fn pearson_vec(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - ma;
        let dy = y - mb;
        num += dx * dy;
        sa += dx * dx;
        sb += dy * dy;
    }
    num / (sa.sqrt() * sb.sqrt() + pearson_epsilon())
}

/// Pearson correlation between APE and an attribute over unmasked nodes.
/// Needs at least two unmasked nodes.
pub fn pearson(e: &AccuracyVector, z: &[f64]) -> Result<f64> {
    if e.e.len() != z.len() {
        return Err(Error::Validation(format!(
            "pearson: length mismatch {} vs {}",
            e.e.len(),
            z.len()
        )));
    }
    let mut ev = Vec::new();
    let mut zv = Vec::new();
    for i in 0..z.len() {
        if e.mask[i] {
            ev.push(e.e[i]);
            zv.push(z[i]);
        }
    }
    if ev.len() < 2 {
        return Err(Error::TooFewUnmasked { have: ev.len() });
    }
    Ok(pearson_vec(&ev, &zv))
}

/// Mean absolute error over all cells.
pub fn mae(y_true: &[f64], y_pred: &[f64]) -> f64 {
    debug_assert_eq!(y_true.len(), y_pred.len());
    y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(&t, &p)| (t - p).abs())
        .sum::<f64>()
        / y_true.len() as f64
}

/// Root mean squared error over all cells.
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> f64 {
    debug_assert_eq!(y_true.len(), y_pred.len());
    let ms = y_true
        .iter()
        .zip(y_pred.iter())
        .map(|(&t, &p)| (t - p) * (t - p))
        .sum::<f64>()
        / y_true.len() as f64;
    ms.sqrt()
}
