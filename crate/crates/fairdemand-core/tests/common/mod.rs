//! Shared fixtures for the integration suites.

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng as _, SeedableRng as _};

pub use fairdemand_core::autodiff::Tensor;
use fairdemand_core::dataset::{
    chronological_split, label_groups, make_windows, DemandTensor, Direction, GroupLabeling,
    Normalizer, NormalizerMode, ProtectedAttributeTable, SplitSpec, WindowedSamples,
};
use fairdemand_core::fairness::{attribute_corr_matrix, AttributeCorrelationMatrix};

/// Everything a training run needs, bundled with owned storage.
pub struct Fixture {
    pub table: ProtectedAttributeTable,
    pub labeling: GroupLabeling,
    pub omega: AttributeCorrelationMatrix,
    pub normalizer: Normalizer,
    pub train: WindowedSamples,
    pub val: WindowedSamples,
    pub test: WindowedSamples,
    pub train_node_means: Vec<f64>,
    pub train_series_norm: Tensor,
}

impl Fixture {
    pub fn train_ctx(&self) -> fairdemand_core::training::TrainContext<'_> {
        fairdemand_core::training::TrainContext {
            train: &self.train,
            val: &self.val,
            table: &self.table,
            labeling: &self.labeling,
            omega: &self.omega,
            normalizer: &self.normalizer,
            train_node_means: &self.train_node_means,
            train_series_norm: &self.train_series_norm,
            propagation: None,
        }
    }
}

/// Build a fixture from an explicit `[N, T]` demand matrix and one rising
/// attribute (later nodes advantaged).
pub fn fixture_from_values(values: Vec<f64>, n: usize, t: usize, k: usize) -> Fixture {
    let node_ids: Vec<String> = (0..n).map(|i| format!("Z{i}")).collect();
    let demand = DemandTensor::new(
        node_ids.clone(),
        Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap(),
        Duration::hours(1),
        t,
        values,
    )
    .unwrap();
    let mut z = Tensor::zeros(&[n, 1]);
    for i in 0..n {
        z.set2(i, 0, (i as f64 + 0.5) / n as f64);
    }
    let table =
        ProtectedAttributeTable::new(node_ids, vec!["attr".into()], vec![Direction::High], z)
            .unwrap();
    build(demand, table, k)
}

/// Assemble split artifacts from a demand tensor and attribute table.
pub fn build(demand: DemandTensor, table: ProtectedAttributeTable, k: usize) -> Fixture {
    let labeling = label_groups(&table).unwrap();
    let omega = attribute_corr_matrix(&table).unwrap();
    let (train, val, test) = chronological_split(&demand, &SplitSpec::default()).unwrap();
    let normalizer = Normalizer::fit(&train, NormalizerMode::PerNode).unwrap();
    let train_node_means = train.node_means();
    let train_series_norm = {
        let n = train.n_nodes();
        let t = train.t_len();
        let mut raw = Tensor::zeros(&[n, t]);
        for i in 0..n {
            for j in 0..t {
                raw.set2(i, j, train.value(i, j));
            }
        }
        normalizer.normalize(&raw)
    };
    let m = 1;
    Fixture {
        table,
        labeling,
        omega,
        normalizer,
        train: make_windows(&train, k, m).unwrap(),
        val: make_windows(&val, k, m).unwrap(),
        test: make_windows(&test, k, m).unwrap(),
        train_node_means,
        train_series_norm,
    }
}

/// Shared-phase sinusoids: every node has mean 10 and the same amplitude, so
/// the exact 2-lag linear recursion is representable by an MLR with a shared
/// bias.
pub fn sinusoid_fixture(n: usize, t: usize, k: usize) -> Fixture {
    let mut values = vec![0.0; n * t];
    for i in 0..n {
        for ti in 0..t {
            let phase = i as f64 * 0.7;
            values[i * t + ti] = 10.0 + 5.0 * ((ti as f64) * std::f64::consts::TAU / 12.0 + phase).sin();
        }
    }
    fixture_from_values(values, n, t, k)
}

/// Heteroskedastic fixture: disadvantaged nodes (low attribute) carry noisier
/// demand, planting an APE-attribute correlation.
pub fn biased_fixture(n: usize, t: usize, k: usize, seed: u64) -> Fixture {
    use rand_chacha::ChaCha20Rng;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = vec![0.0; n * t];
    for i in 0..n {
        let score = (i as f64 + 0.5) / n as f64; // matches the rising attribute
        let base = 6.0 + 30.0 * score;
        let sigma = 0.45 - 0.35 * score;
        for ti in 0..t {
            let season = 1.0 + 0.5 * ((ti as f64) * std::f64::consts::TAU / 24.0).sin();
            let shock: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>() - 1.5;
            let noise = (sigma * shock).exp();
            values[i * t + ti] = (base * season * noise).max(0.0).round();
        }
    }
    fixture_from_values(values, n, t, k)
}
