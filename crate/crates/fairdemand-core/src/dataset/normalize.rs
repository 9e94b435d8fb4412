//! Z-score normalization fit on the training split only.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

use super::demand::DemandTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerMode {
    /// One (mean, std) pair per node.
    PerNode,
    /// A single (mean, std) pair shared by all nodes.
    Global,
}

/// Invertible z-score transform. Statistics come from the training split;
/// the standard deviation is floored at 1e-8 so constant nodes normalize to
/// zero instead of dividing by zero.
#[derive(Debug, Clone)]
pub struct Normalizer {
    pub mode: NormalizerMode,
    means: Vec<f64>,
    stds: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn fit(train: &DemandTensor, mode: NormalizerMode) -> Result<Self> {
        let n = train.n_nodes();
        let t = train.t_len();
        if n == 0 || t == 0 {
            return Err(Error::Validation("cannot fit normalizer on empty data".into()));
        }
        let (means, stds) = match mode {
            NormalizerMode::PerNode => {
                let mut means = Vec::with_capacity(n);
                let mut stds = Vec::with_capacity(n);
                for i in 0..n {
                    let series = train.node_series(i);
                    let mean = series.iter().sum::<f64>() / t as f64;
                    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / t as f64;
                    means.push(mean);
                    stds.push(var.sqrt().max(STD_FLOOR));
                }
                (means, stds)
            }
            NormalizerMode::Global => {
                let all = train.values();
                let count = all.len() as f64;
                let mean = all.iter().sum::<f64>() / count;
                let var = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
                (vec![mean; n], vec![var.sqrt().max(STD_FLOOR); n])
            }
        };
        Ok(Normalizer { mode, means, stds })
    }

    pub fn mean(&self, node: usize) -> f64 {
        self.means[node]
    }

    pub fn std(&self, node: usize) -> f64 {
        self.stds[node]
    }

    /// Per-node means as a column tensor.
    pub fn mean_column(&self) -> Tensor {
        Tensor::column(&self.means)
    }

    /// Per-node stds as a column tensor.
    pub fn std_column(&self) -> Tensor {
        Tensor::column(&self.stds)
    }

    /// Normalize an `[N, cols]` tensor row-by-row.
    pub fn normalize(&self, x: &Tensor) -> Tensor {
        let (n, cols) = (x.shape()[0], x.shape()[1]);
        debug_assert_eq!(n, self.means.len());
        let mut out = Tensor::zeros(&[n, cols]);
        for i in 0..n {
            for j in 0..cols {
                out.set2(i, j, (x.get2(i, j) - self.means[i]) / self.stds[i]);
            }
        }
        out
    }

    /// Invert [`Normalizer::normalize`].
    pub fn denormalize(&self, x: &Tensor) -> Tensor {
        let (n, cols) = (x.shape()[0], x.shape()[1]);
        debug_assert_eq!(n, self.means.len());
        let mut out = Tensor::zeros(&[n, cols]);
        for i in 0..n {
            for j in 0..cols {
                out.set2(i, j, x.get2(i, j) * self.stds[i] + self.means[i]);
            }
        }
        out
    }
}
