//! The experiment specification: dataset inputs (files or the bundled
//! synthetic generator), model roster, training and grid settings. A run is
//! reproducible from its spec plus data hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fairdemand_core::dataset::{Direction, NormalizerMode, SplitSpec};
use fairdemand_core::models::ModelKind;
use fairdemand_core::training::{ErrorPooling, FairnessMode, GridSpec, TrainConfig};

use crate::error::{CliError, CliResult};
use crate::synth::SyntheticSpec;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Report formats to emit: any of "csv", "md", "json".
    pub formats: Vec<String>,
    pub data: DataSpec,
    pub dataset: DatasetSpec,
    pub models: ModelsSpec,
    pub fairness: FairnessSpec,
    pub train: TrainSpec,
    pub grid: GridSpecToml,
    pub graph: GraphSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            seed: 0,
            out_dir: PathBuf::from("out"),
            formats: vec!["csv".into(), "md".into()],
            data: DataSpec::default(),
            dataset: DatasetSpec::default(),
            models: ModelsSpec::default(),
            fairness: FairnessSpec::default(),
            train: TrainSpec::default(),
            grid: GridSpecToml::default(),
            graph: GraphSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSpec {
    pub trips: Option<PathBuf>,
    pub attributes: Option<PathBuf>,
    pub distances: Option<PathBuf>,
    pub neighbor_pairs: Option<PathBuf>,
    pub interval_hours: Option<u32>,
    /// Advantaged-direction overrides per attribute column.
    pub directions: BTreeMap<String, Direction>,
    /// Bundled generator; used when no trip file is given.
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub k: usize,
    pub m: usize,
    pub split: SplitSpec,
    pub normalizer: NormalizerMode,
    pub pooling: ErrorPooling,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            k: 12,
            m: 1,
            split: SplitSpec::default(),
            normalizer: NormalizerMode::PerNode,
            pooling: ErrorPooling::PerStep,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSpec {
    pub kinds: Vec<ModelKind>,
    pub hidden_mlp: usize,
    pub hidden_rnn: usize,
    pub dropout: f64,
    pub arima: (usize, usize, usize),
    pub linear_hidden: bool,
}

impl Default for ModelsSpec {
    fn default() -> Self {
        ModelsSpec {
            kinds: vec![
                ModelKind::Ha,
                ModelKind::Mlr,
                ModelKind::Arima,
                ModelKind::Mlp,
                ModelKind::Gru,
                ModelKind::Tgcn,
            ],
            hidden_mlp: 300,
            hidden_rnn: 64,
            dropout: 0.01,
            arima: (1, 1, 1),
            linear_hidden: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FairnessSpec {
    /// `multi`, `single:<attr>`, `em:<attr>`, `rfg:<attr>` or `ifg:<attr>`.
    pub mode: String,
    /// Attribute subset by column name; empty keeps all.
    pub attributes: Vec<String>,
}

impl Default for FairnessSpec {
    fn default() -> Self {
        FairnessSpec {
            mode: "multi".into(),
            attributes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSpec {
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_epochs: d.max_epochs,
            patience: d.patience,
            clip_norm: d.clip_norm,
        }
    }
}

impl TrainSpec {
    pub fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
            clip_norm: self.clip_norm,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpecToml {
    pub lambdas: Vec<f64>,
    pub hidden: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub rmse_tolerance: f64,
}

impl Default for GridSpecToml {
    fn default() -> Self {
        let d = GridSpec::default();
        GridSpecToml {
            lambdas: d.lambdas,
            hidden: d.hidden,
            learning_rates: d.learning_rates,
            batch_sizes: d.batch_sizes,
            rmse_tolerance: d.rmse_tolerance,
        }
    }
}

impl GridSpecToml {
    pub fn to_grid(&self) -> GridSpec {
        GridSpec {
            lambdas: self.lambdas.clone(),
            hidden: self.hidden.clone(),
            learning_rates: self.learning_rates.clone(),
            batch_sizes: self.batch_sizes.clone(),
            rmse_tolerance: self.rmse_tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub sigma_sq: f64,
    pub alpha: f64,
    /// Distance unit label for the distance matrix; explicit configuration,
    /// never guessed.
    pub distance_unit: String,
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec {
            sigma_sq: fairdemand_core::spatial::DEFAULT_SIGMA_SQ,
            alpha: fairdemand_core::spatial::DEFAULT_ALPHA,
            distance_unit: "kilometers".into(),
        }
    }
}

impl ExperimentSpec {
    /// Load a spec from TOML, or from a replay manifest (JSON with an
    /// embedded `spec` object).
    pub fn load(path: &Path) -> CliResult<ExperimentSpec> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read spec {}: {e}", path.display())))?;
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            #[derive(Deserialize)]
            struct ManifestEnvelope {
                spec: ExperimentSpec,
            }
            if let Ok(m) = serde_json::from_str::<ManifestEnvelope>(&raw) {
                return Ok(m.spec);
            }
            return serde_json::from_str(&raw)
                .map_err(|e| CliError::validation(format!("bad JSON spec: {e}")));
        }
        toml::from_str(&raw).map_err(|e| CliError::validation(format!("bad spec: {e}")))
    }

    /// Parse the fairness mode string against the resolved attribute names.
    pub fn fairness_mode(&self, attr_names: &[String]) -> CliResult<FairnessMode> {
        parse_mode(&self.mode_string(), attr_names)
    }

    pub fn mode_string(&self) -> String {
        self.fairness.mode.clone()
    }

    /// Input files that exist, for hashing into the manifest.
    pub fn input_files(&self) -> Vec<PathBuf> {
        [
            self.data.trips.clone(),
            self.data.attributes.clone(),
            self.data.distances.clone(),
            self.data.neighbor_pairs.clone(),
        ]
        .into_iter()
        .flatten()
        .collect()
    }
}

/// `multi`, `single:<attr>`, `em[:<attr>]`, `rfg[:<attr>]`, `ifg[:<attr>]`.
/// Bare benchmark modes fall back to the first configured attribute.
pub fn parse_mode(mode: &str, attr_names: &[String]) -> CliResult<FairnessMode> {
    let lower = mode.to_ascii_lowercase();
    let (head, attr) = match lower.split_once(':') {
        Some((h, a)) => (h.to_string(), Some(a.to_string())),
        None => (lower, None),
    };
    let resolve = |attr: Option<String>| -> CliResult<usize> {
        let name = match attr {
            Some(a) => a,
            None => attr_names
                .first()
                .cloned()
                .ok_or_else(|| CliError::validation("no attribute available for the mode"))?,
        };
        attr_names
            .iter()
            .position(|n| n == &name)
            .ok_or_else(|| CliError::validation(format!("unknown attribute '{name}' in mode")))
    };
    match head.as_str() {
        "multi" => Ok(FairnessMode::Multi),
        "none" => Ok(FairnessMode::None),
        "single" => Ok(FairnessMode::Single(resolve(attr)?)),
        "em" => Ok(FairnessMode::EqualMean(resolve(attr)?)),
        "rfg" => Ok(FairnessMode::RegionGap(resolve(attr)?)),
        "ifg" => Ok(FairnessMode::IndividualGap(resolve(attr)?)),
        other => Err(CliError::validation(format!("unknown fairness mode '{other}'"))),
    }
}
