//! Central finite-difference gradient oracle.
//!
//! Independent of the reverse-accumulation path: it only ever calls the
//! supplied scalar function, so it can serve as ground truth for gradient
//! checks.

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Central-difference gradient `(f(x + h e_k) - f(x - h e_k)) / (2h)` per
/// coordinate. Rejects `h <= 0` and non-finite evaluations of `f`.
pub fn finite_diff_oracle<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::Oracle(format!("step must be positive, got {h}")));
    }
    let mut grad = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for k in 0..x.numel() {
        let base = x.data()[k];
        probe.data_mut()[k] = base + h;
        let up = f(&probe)?;
        probe.data_mut()[k] = base - h;
        let down = f(&probe)?;
        probe.data_mut()[k] = base;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!(
                "non-finite evaluation while probing coordinate {k}"
            )));
        }
        grad.data_mut()[k] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
