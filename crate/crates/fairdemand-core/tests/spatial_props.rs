//! Structural invariants of the adjacency builders: sparsity monotonicity,
//! exact scale consistency, and the spectral bound of the propagation matrix.

use fairdemand_core::autodiff::Tensor;
use fairdemand_core::spatial::{binary_adjacency, gaussian_adjacency, propagation_matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_distances(n: usize, rng: &mut ChaCha20Rng) -> Tensor {
    let mut d = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = rng.gen::<f64>() * 250.0;
            d.set2(i, j, v);
            d.set2(j, i, v);
        }
    }
    d
}

#[test]
fn raising_alpha_never_adds_nonzeros() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for _ in 0..20 {
        let n = rng.gen_range(4..16);
        let d = random_distances(n, &mut rng);
        let mut previous = usize::MAX;
        for alpha in [0.0, 0.1, 0.3, 0.5, 0.7, 0.9] {
            let w = gaussian_adjacency(&d, 1e4, alpha).unwrap();
            let nz = w.nonzeros();
            assert!(nz <= previous, "alpha {alpha} grew the support");
            previous = nz;
        }
    }
}

#[test]
fn power_of_two_rescaling_is_exact() {
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    for &c in &[2.0f64, 4.0, 0.5, 8.0] {
        let n = 8;
        let d = random_distances(n, &mut rng);
        let mut scaled = d.clone();
        for v in scaled.data_mut() {
            *v *= c;
        }
        let base = gaussian_adjacency(&d, 1e4, 0.5).unwrap();
        let resc = gaussian_adjacency(&scaled, 1e4 * c * c, 0.5).unwrap();
        for (a, b) in base.w.data().iter().zip(resc.w.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits(), "scale {c}");
        }
    }
}

/// Largest absolute eigenvalue of a symmetric matrix via power iteration.
fn spectral_norm(m: &Tensor) -> f64 {
    let n = m.shape()[0];
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.01).collect();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[i] += m.get2(i, j) * v[j];
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for x in next.iter_mut() {
            *x /= norm;
        }
        lambda = norm;
        v = next;
    }
    lambda
}

#[test]
fn propagation_matrix_spectrum_is_bounded_by_one() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    for _ in 0..15 {
        let n = rng.gen_range(2..33);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < 0.3 {
                    pairs.push((i, j));
                }
            }
        }
        let adj = binary_adjacency(n, &pairs).unwrap();
        let prop = propagation_matrix(&adj);
        // Symmetric by construction.
        for i in 0..n {
            for j in 0..n {
                assert_eq!(prop.a_hat.get2(i, j), prop.a_hat.get2(j, i));
            }
        }
        let norm = spectral_norm(&prop.a_hat);
        assert!(norm <= 1.0 + 1e-9, "N={n}: spectral norm {norm}");
    }
}

proptest! {
    #[test]
    fn propagation_stays_symmetric(pairs in proptest::collection::vec((0usize..10, 0usize..10), 0..20)) {
        let adj = binary_adjacency(10, &pairs).unwrap();
        let prop = propagation_matrix(&adj);
        for i in 0..10 {
            for j in 0..10 {
                prop_assert_eq!(prop.a_hat.get2(i, j), prop.a_hat.get2(j, i));
            }
        }
    }

    #[test]
    fn gaussian_entries_respect_the_threshold(sigma_sq in 1.0f64..1e5, alpha in 0.0f64..0.99) {
        let mut rng = ChaCha20Rng::seed_from_u64(34);
        let d = random_distances(6, &mut rng);
        let w = gaussian_adjacency(&d, sigma_sq, alpha).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let v = w.w.get2(i, j);
                if i == j {
                    prop_assert_eq!(v, 0.0);
                } else {
                    prop_assert!(v == 0.0 || v >= alpha);
                }
            }
        }
    }
}
