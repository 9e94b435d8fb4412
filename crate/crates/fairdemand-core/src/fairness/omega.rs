//! The attribute correlation matrix, its ridged inverse, and the multiple
//! correlation coefficient.

use crate::autodiff::{Tensor, SQRT_EPS};
use crate::dataset::ProtectedAttributeTable;
use crate::error::{Error, Result};

use super::metrics::{pearson, pearson_vec, AccuracyVector};

/// Ridge added before inverting the attribute correlation matrix. The
/// attributes are strongly collinear in practice, so the quadratic form must
/// stay defined near singularity; the ridge is minimal because the linear
/// model only forecasts, it never interprets coefficients.
pub const OMEGA_RIDGE: f64 = 1e-8;

/// Q x Q correlation matrix of the protected attributes with a precomputed
/// inverse of `omega + ridge * I`. Constant during training; computed once.
#[derive(Debug, Clone)]
pub struct AttributeCorrelationMatrix {
    pub omega: Tensor,
    pub omega_inv: Tensor,
    pub ridge: f64,
}

impl AttributeCorrelationMatrix {
    pub fn q(&self) -> usize {
        self.omega.shape()[0]
    }
}

/// Pairwise Pearson correlations over all nodes (attributes are complete, so
/// no masking applies); the diagonal is exactly one and the inverse is taken
/// on `omega + ridge * I`.
pub fn attribute_corr_matrix(table: &ProtectedAttributeTable) -> Result<AttributeCorrelationMatrix> {
    let q = table.n_attributes();
    let n = table.n_nodes();
    if q < 1 {
        return Err(Error::Validation("need at least one attribute".into()));
    }
    if n < 3 {
        return Err(Error::Validation(format!(
            "need at least 3 nodes for attribute correlations, have {n}"
        )));
    }
    let columns: Vec<Vec<f64>> = (0..q).map(|j| table.attribute(j)).collect();
    let mut omega = Tensor::eye(q);
    for j in 0..q {
        for k in (j + 1)..q {
            let r = pearson_vec(&columns[j], &columns[k]);
            omega.set2(j, k, r);
            omega.set2(k, j, r);
        }
    }
    let mut ridged = omega.clone();
    for j in 0..q {
        ridged.set2(j, j, ridged.get2(j, j) + OMEGA_RIDGE);
    }
    let omega_inv = invert(&ridged)?;
    Ok(AttributeCorrelationMatrix {
        omega,
        omega_inv,
        ridge: OMEGA_RIDGE,
    })
}

/// Gauss-Jordan inverse with partial pivoting. Fails with a condition-number
/// report when a pivot collapses.
fn invert(a: &Tensor) -> Result<Tensor> {
    let n = a.shape()[0];
    let mut work = a.clone();
    let mut inv = Tensor::eye(n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = work.get2(col, col).abs();
        for r in (col + 1)..n {
            let v = work.get2(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val < 1e-300 {
            return Err(Error::Singular { cond: f64::INFINITY });
        }
        if pivot_row != col {
            swap_rows(&mut work, col, pivot_row);
            swap_rows(&mut inv, col, pivot_row);
        }
        let p = work.get2(col, col);
        for j in 0..n {
            work.set2(col, j, work.get2(col, j) / p);
            inv.set2(col, j, inv.get2(col, j) / p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = work.get2(r, col);
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                work.set2(r, j, work.get2(r, j) - f * work.get2(col, j));
                inv.set2(r, j, inv.get2(r, j) - f * inv.get2(col, j));
            }
        }
    }
    // One-norm condition estimate; reject the hopeless cases.
    let cond = one_norm(a) * one_norm(&inv);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Singular { cond });
    }
    Ok(inv)
}

fn swap_rows(t: &mut Tensor, a: usize, b: usize) {
    let n = t.shape()[1];
    for j in 0..n {
        let tmp = t.get2(a, j);
        t.set2(a, j, t.get2(b, j));
        t.set2(b, j, tmp);
    }
}

fn one_norm(t: &Tensor) -> f64 {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..c)
        .map(|j| (0..r).map(|i| t.get2(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// The multiple correlation coefficient and the correlation vector behind it.
#[derive(Debug, Clone)]
pub struct MultipleCorrelation {
    pub r: f64,
    pub c: Vec<f64>,
}

/// `R = sqrt(c' omega_inv c + eps)` where `c_j` is the APE-attribute
/// correlation. Differentiable with respect to predictions through `c`; the
/// inverse is held constant.
pub fn multiple_correlation(
    e: &AccuracyVector,
    table: &ProtectedAttributeTable,
    omega: &AttributeCorrelationMatrix,
) -> Result<MultipleCorrelation> {
    let q = table.n_attributes();
    if omega.q() != q {
        return Err(Error::Validation(format!(
            "correlation matrix is {}x{} but the table has {q} attributes",
            omega.q(),
            omega.q()
        )));
    }
    let mut c = Vec::with_capacity(q);
    for j in 0..q {
        c.push(pearson(e, &table.attribute(j))?);
    }
    let mut qf = 0.0;
    for j in 0..q {
        for k in 0..q {
            qf += c[j] * omega.omega_inv.get2(j, k) * c[k];
        }
    }
    Ok(MultipleCorrelation {
        r: (qf + SQRT_EPS).sqrt(),
        c,
    })
}
