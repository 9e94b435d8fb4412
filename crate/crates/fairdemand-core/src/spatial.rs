//! Spatial graph construction: Gaussian-kernel weighted adjacency, binary
//! adjacency from neighbor pairs, and the symmetric-normalized propagation
//! matrix consumed by graph-convolutional forecasters.
//!
//! All functions here are pure over immutable inputs.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Default kernel bandwidth for [`gaussian_adjacency`].
pub const DEFAULT_SIGMA_SQ: f64 = 1e4;
/// Default sparsity threshold for [`gaussian_adjacency`].
pub const DEFAULT_ALPHA: f64 = 0.5;

/// Distance-kernel weighted adjacency. Diagonal is zero and every retained
/// entry is at least `alpha`.
#[derive(Debug, Clone)]
pub struct WeightedAdjacency {
    pub w: Tensor,
    pub sigma_sq: f64,
    pub alpha: f64,
}

impl WeightedAdjacency {
    pub fn nonzeros(&self) -> usize {
        self.w.data().iter().filter(|&&v| v != 0.0).count()
    }
}

/// Binary spatial adjacency: symmetric, zero diagonal.
#[derive(Debug, Clone)]
pub struct BinaryAdjacency {
    pub a: Tensor,
    /// Self-pairs encountered and ignored while building.
    pub ignored_self_pairs: usize,
}

/// Symmetric-normalized propagation matrix `D^{-1/2} (A + I) D^{-1/2}` where
/// `D` is the degree matrix of `A + I`.
#[derive(Debug, Clone)]
pub struct PropagationMatrix {
    pub a_hat: Tensor,
}

/// `w_ij = exp(-d_ij^2 / sigma_sq)` when `i != j` and the kernel value clears
/// `alpha`, else zero.
pub fn gaussian_adjacency(distances: &Tensor, sigma_sq: f64, alpha: f64) -> Result<WeightedAdjacency> {
    let shape = distances.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::Validation(format!(
            "distance matrix must be square, got {shape:?}"
        )));
    }
    if !(sigma_sq > 0.0) {
        return Err(Error::Validation(format!(
            "sigma_sq must be positive, got {sigma_sq}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Validation(format!(
            "alpha must lie in [0, 1), got {alpha}"
        )));
    }
    let n = shape[0];
    let mut w = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let d = distances.get2(i, j);
            if d < 0.0 {
                return Err(Error::Validation(format!(
                    "negative distance {d} at ({i}, {j})"
                )));
            }
            if i == j {
                continue;
            }
            let k = (-(d * d) / sigma_sq).exp();
            if k >= alpha {
                w.set2(i, j, k);
            }
        }
    }
    Ok(WeightedAdjacency { w, sigma_sq, alpha })
}

/// Symmetric 0/1 adjacency from undirected neighbor pairs; the diagonal is
/// forced to zero and self-pairs are ignored (counted, not fatal).
pub fn binary_adjacency(n: usize, neighbor_pairs: &[(usize, usize)]) -> Result<BinaryAdjacency> {
    let mut a = Tensor::zeros(&[n, n]);
    let mut ignored_self_pairs = 0;
    for &(i, j) in neighbor_pairs {
        if i >= n || j >= n {
            return Err(Error::Validation(format!(
                "neighbor pair ({i}, {j}) out of range for {n} nodes"
            )));
        }
        if i == j {
            ignored_self_pairs += 1;
            continue;
        }
        a.set2(i, j, 1.0);
        a.set2(j, i, 1.0);
    }
    Ok(BinaryAdjacency {
        a,
        ignored_self_pairs,
    })
}

/// Graph-convolution normalization with self-loops. An isolated node ends up
/// with `a_hat[i][i] = 1`.
pub fn propagation_matrix(adj: &BinaryAdjacency) -> PropagationMatrix {
    let n = adj.a.shape()[0];
    let mut deg = vec![0.0f64; n];
    for i in 0..n {
        let mut d = 1.0; // self-loop
        for j in 0..n {
            d += adj.a.get2(i, j);
        }
        deg[i] = d;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut a_hat = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in 0..n {
            let aij = if i == j { 1.0 } else { adj.a.get2(i, j) };
            if aij != 0.0 {
                a_hat.set2(i, j, inv_sqrt[i] * aij * inv_sqrt[j]);
            }
        }
    }
    PropagationMatrix { a_hat }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_weight_one() {
        let d = Tensor::zeros(&[3, 3]);
        let w = gaussian_adjacency(&d, DEFAULT_SIGMA_SQ, DEFAULT_ALPHA).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 0.0 } else { 1.0 };
                assert_eq!(w.w.get2(i, j), expect);
            }
        }
    }

    #[test]
    fn kernel_value_just_below_alpha_is_zeroed() {
        // exp(-83.26^2 / 1e4) = exp(-0.69322...) = 0.49995... < 0.5.
        let mut d = Tensor::zeros(&[2, 2]);
        d.set2(0, 1, 83.26);
        d.set2(1, 0, 83.26);
        let w = gaussian_adjacency(&d, 1e4, 0.5).unwrap();
        assert_eq!(w.w.get2(0, 1), 0.0);
        assert_eq!(w.w.get2(1, 0), 0.0);
        // Just under the cutoff distance the weight is retained.
        d.set2(0, 1, 83.0);
        d.set2(1, 0, 83.0);
        let w = gaussian_adjacency(&d, 1e4, 0.5).unwrap();
        assert!(w.w.get2(0, 1) >= 0.5);
    }

    #[test]
    fn negative_distance_rejected() {
        let mut d = Tensor::zeros(&[2, 2]);
        d.set2(0, 1, -1.0);
        assert!(gaussian_adjacency(&d, 1e4, 0.5).is_err());
    }

    #[test]
    fn binary_single_pair_symmetric() {
        let b = binary_adjacency(3, &[(0, 1)]).unwrap();
        assert_eq!(b.a.get2(0, 1), 1.0);
        assert_eq!(b.a.get2(1, 0), 1.0);
        assert_eq!(b.a.data().iter().filter(|&&v| v != 0.0).count(), 2);
    }

    #[test]
    fn binary_empty_is_zero_matrix() {
        let b = binary_adjacency(4, &[]).unwrap();
        assert!(b.a.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ring_of_four_has_row_sums_two() {
        let b = binary_adjacency(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        for i in 0..4 {
            let s: f64 = (0..4).map(|j| b.a.get2(i, j)).sum();
            assert_eq!(s, 2.0);
        }
    }

    #[test]
    fn self_pair_is_ignored_with_count() {
        let b = binary_adjacency(3, &[(1, 1), (0, 2)]).unwrap();
        assert_eq!(b.ignored_self_pairs, 1);
        assert_eq!(b.a.get2(1, 1), 0.0);
    }

    #[test]
    fn propagation_single_node_is_one() {
        let b = binary_adjacency(1, &[]).unwrap();
        let p = propagation_matrix(&b);
        assert_eq!(p.a_hat.get2(0, 0), 1.0);
    }

    #[test]
    fn propagation_two_connected_nodes_all_half() {
        let b = binary_adjacency(2, &[(0, 1)]).unwrap();
        let p = propagation_matrix(&b);
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.a_hat.get2(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_node_keeps_unit_self_loop() {
        let b = binary_adjacency(3, &[(0, 1)]).unwrap();
        let p = propagation_matrix(&b);
        assert_eq!(p.a_hat.get2(2, 2), 1.0);
    }
}
