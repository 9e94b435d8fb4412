//! Per-node ARIMA coefficient estimation by conditional least squares.
//!
//! AR-only models use ordinary least squares on the differenced series.
//! Models with a moving-average part use the Hannan-Rissanen two-stage
//! procedure: a long autoregression supplies residual estimates, then the
//! ARMA coefficients come from a second least-squares pass. Explosive or
//! non-invertible fits fall back to zeroed coefficients, which with d >= 1
//! is exactly the random-walk forecast.

use crate::error::{Error, Result};

/// Coefficients for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCoefficients {
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub fallback: bool,
}

/// Fit results for every node, in node order.
#[derive(Debug, Clone)]
pub struct ArimaFit {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub nodes: Vec<NodeCoefficients>,
}

impl ArimaFit {
    pub fn fallback_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.fallback).count()
    }
}

/// Difference a series `d` times.
pub fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut w = series.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

/// Fit one node series. The series must be long enough for the orders:
/// at least `10 * (p + d + q)` observations.
pub fn fit_node(series: &[f64], p: usize, d: usize, q: usize) -> Result<NodeCoefficients> {
    let min_len = 10 * (p + d + q).max(1);
    if series.len() < min_len {
        return Err(Error::Validation(format!(
            "series length {} below the {min_len} needed for orders ({p},{d},{q})",
            series.len()
        )));
    }
    let w = difference(series, d);
    // No drift constant once differenced: (0,1,0) must forecast the last
    // observed value exactly.
    let coef = estimate_arma(&w, p, q, d == 0);
    let mut coef = match coef {
        Some(c) => c,
        None => return Ok(fallback_coefficients(&w, p, d, q)),
    };
    if spectral_radius(&coef.ar) >= 0.999 || spectral_radius(&coef.ma) >= 0.999 {
        return Ok(fallback_coefficients(&w, p, d, q));
    }
    coef.fallback = false;
    Ok(coef)
}

/// Fit all nodes of an `[N, T]` value matrix given row-major storage.
pub fn fit_all(values: &[f64], n: usize, t: usize, p: usize, d: usize, q: usize) -> Result<ArimaFit> {
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        nodes.push(fit_node(&values[i * t..(i + 1) * t], p, d, q)?);
    }
    Ok(ArimaFit { p, d, q, nodes })
}

fn fallback_coefficients(w: &[f64], p: usize, d: usize, q: usize) -> NodeCoefficients {
    // Zeroed dynamics: a random walk once differencing is undone (d >= 1),
    // or the series mean when d = 0.
    let intercept = if d == 0 {
        w.iter().sum::<f64>() / w.len().max(1) as f64
    } else {
        0.0
    };
    NodeCoefficients {
        intercept,
        ar: vec![0.0; p],
        ma: vec![0.0; q],
        fallback: true,
    }
}

fn estimate_arma(w: &[f64], p: usize, q: usize, with_intercept: bool) -> Option<NodeCoefficients> {
    if p == 0 && q == 0 {
        let intercept = if with_intercept {
            w.iter().sum::<f64>() / w.len().max(1) as f64
        } else {
            0.0
        };
        return Some(NodeCoefficients {
            intercept,
            ar: Vec::new(),
            ma: Vec::new(),
            fallback: false,
        });
    }
    if q == 0 {
        let beta = ols_lags_from(w, None, p, 0, p, with_intercept)?;
        return Some(NodeCoefficients {
            intercept: beta[0],
            ar: beta[1..].to_vec(),
            ma: Vec::new(),
            fallback: false,
        });
    }
    // Hannan-Rissanen: long AR for residuals, then joint least squares.
    let long = (2 * (p + q)).max(10).min(w.len() / 4).max(p + q + 1);
    let beta_long = ols_lags_from(w, None, long, 0, long, with_intercept)?;
    let mut resid = vec![0.0; w.len()];
    for t in long..w.len() {
        let mut pred = beta_long[0];
        for l in 1..=long {
            pred += beta_long[l] * w[t - l];
        }
        resid[t] = w[t] - pred;
    }
    let beta = ols_lags_from(w, Some(&resid), p, q, long + q, with_intercept)?;
    Some(NodeCoefficients {
        intercept: beta[0],
        ar: beta[1..=p].to_vec(),
        ma: beta[p + 1..].to_vec(),
        fallback: false,
    })
}

/// Least squares of `w_t` on `p` lags of `w` and optionally `q` lags of a
/// residual series, using rows from `skip` on. The intercept column is
/// dropped for differenced models. Returns `[c, ar..., ma...]` with `c = 0`
/// when the intercept is suppressed.
fn ols_lags_from(
    w: &[f64],
    resid: Option<&[f64]>,
    p: usize,
    q: usize,
    skip: usize,
    with_intercept: bool,
) -> Option<Vec<f64>> {
    let skip = skip.max(p).max(q);
    if w.len() <= skip + 1 {
        return None;
    }
    let ic = usize::from(with_intercept);
    let k = ic + p + q;
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k];
    let mut row = vec![0.0; k];
    for t in skip..w.len() {
        if with_intercept {
            row[0] = 1.0;
        }
        for l in 1..=p {
            row[ic + l - 1] = w[t - l];
        }
        if let Some(r) = resid {
            for l in 1..=q {
                row[ic + p + l - 1] = r[t - l];
            }
        }
        for i in 0..k {
            xty[i] += row[i] * w[t];
            for j in 0..k {
                xtx[i * k + j] += row[i] * row[j];
            }
        }
    }
    let beta = solve_linear(&mut xtx, &mut xty, k)?;
    if with_intercept {
        Some(beta)
    } else {
        let mut full = vec![0.0];
        full.extend(beta);
        Some(full)
    }
}

/// In-place Gaussian elimination with partial pivoting.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        if a[piv * n + col].abs() < 1e-12 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let pv = a[col * n + col];
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col] / pv;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    Some((0..n).map(|i| b[i] / a[i * n + i]).collect())
}

/// Spectral radius of the companion matrix of a lag polynomial, via power
/// iteration. Zero for an empty polynomial.
fn spectral_radius(coef: &[f64]) -> f64 {
    let p = coef.len();
    if p == 0 || coef.iter().all(|&c| c == 0.0) {
        return 0.0;
    }
    if p == 1 {
        return coef[0].abs();
    }
    let mut v = vec![1.0; p];
    let mut radius = 0.0;
    for _ in 0..200 {
        let mut next = vec![0.0; p];
        next[0] = coef.iter().zip(v.iter()).map(|(c, x)| c * x).sum();
        for i in 1..p {
            next[i] = v[i - 1];
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        radius = norm;
        v = next;
    }
    radius
}
