//! Grid search over the fairness weight and model hyperparameters, with the
//! explicit best-lambda selection rule: minimize the summed absolute
//! correlation subject to an RMSE budget relative to the lambda = 0 baseline.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fairness::FairnessReport;
use crate::models::{ForecastModel, ModelConfig, ModelInit, ModelKind};

use super::evaluate::{evaluate, ErrorPooling};
use super::loss::{FairnessMode, LossConfig};
use super::train::{train, TrainConfig, TrainContext, TrainHistory};
use crate::dataset::WindowedSamples;

/// The search space. Every grid includes lambda = 0 so the fairness-unaware
/// baseline is always trained.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    /// Optional hidden-size sweep; empty keeps the model default.
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Optional learning-rate sweep; empty keeps the train default.
    #[serde(default)]
    pub learning_rates: Vec<f64>,
    /// Optional batch-size sweep; empty keeps the train default.
    #[serde(default)]
    pub batch_sizes: Vec<usize>,
    /// RMSE budget tau: candidates must satisfy
    /// `rmse <= (1 + tau) * rmse(lambda = 0)`.
    pub rmse_tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambdas: vec![0.0, 0.025, 0.05, 0.075, 0.1, 0.2, 0.3, 0.4, 0.5],
            hidden: Vec::new(),
            learning_rates: Vec::new(),
            batch_sizes: Vec::new(),
            rmse_tolerance: 0.10,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Validation("lambda grid is empty".into()));
        }
        if !self.lambdas.iter().any(|&l| l == 0.0) {
            return Err(Error::Validation(
                "lambda grid must include 0 (the fairness-unaware baseline)".into(),
            ));
        }
        if self.rmse_tolerance < 0.0 {
            return Err(Error::Validation("rmse tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One trained configuration and its test report.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub model_cfg: ModelConfig,
    pub train_cfg: TrainConfig,
    pub loss_cfg: LossConfig,
    pub report: FairnessReport,
    pub history: TrainHistory,
}

/// All rows plus the selected best configuration.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    /// Index of the selected row.
    pub best: usize,
    /// Index of the lambda = 0 baseline row (best RMSE among baselines).
    pub baseline: usize,
    /// False when no row met the RMSE budget and the unconstrained
    /// fairness-optimal row was returned instead.
    pub constraint_satisfied: bool,
}

/// The fairness objective the selection rule minimizes: the summed absolute
/// correlation over the attributes the loss mode targets.
fn selection_score(report: &FairnessReport, loss_cfg: &LossConfig) -> f64 {
    match loss_cfg.mode.target_attribute() {
        Some(j) => report.attrs.get(j).and_then(|a| a.corr).map(f64::abs).unwrap_or(0.0),
        None => {
            if loss_cfg.attributes.is_empty() {
                report.sum_abs_corr()
            } else {
                loss_cfg
                    .attributes
                    .iter()
                    .filter_map(|&j| report.attrs.get(j).and_then(|a| a.corr))
                    .map(f64::abs)
                    .sum()
            }
        }
    }
}

/// Datasets and shared artifacts for one grid run.
pub struct GridContext<'a> {
    pub train_ctx: TrainContext<'a>,
    pub test: &'a WindowedSamples,
    pub pooling: ErrorPooling,
}

/// Train every configuration in the grid (in parallel over a work queue of
/// independent runs) and select the best lambda by the declared rule:
/// minimize the fairness objective subject to the RMSE budget; ties go to
/// the lower RMSE; if nothing fits the budget, return the unconstrained
/// fairness optimum flagged.
pub fn grid_search(
    kind: ModelKind,
    base_model_cfg: &ModelConfig,
    base_train_cfg: &TrainConfig,
    mode: FairnessMode,
    attributes: Vec<usize>,
    grid: &GridSpec,
    ctx: &GridContext,
) -> Result<GridOutcome> {
    grid.validate()?;
    let hidden = non_empty_or(&grid.hidden, base_model_cfg.hidden);
    let lrs = non_empty_or(&grid.learning_rates, base_train_cfg.learning_rate);
    let batches = non_empty_or(&grid.batch_sizes, base_train_cfg.batch_size);

    let mut configs = Vec::new();
    for &lambda in &grid.lambdas {
        for &h in &hidden {
            for &lr in &lrs {
                for &bs in &batches {
                    let mut mc = base_model_cfg.clone();
                    mc.kind = kind;
                    mc.hidden = h;
                    mc.learning_rate = lr;
                    let mut tc = base_train_cfg.clone();
                    tc.learning_rate = lr;
                    tc.batch_size = bs;
                    let lc = LossConfig {
                        lambda,
                        mode: if lambda == 0.0 && mode == FairnessMode::None {
                            FairnessMode::None
                        } else {
                            mode.clone()
                        },
                        attributes: attributes.clone(),
                    };
                    configs.push((mc, tc, lc));
                }
            }
        }
    }

    let rows: Vec<GridRow> = configs
        .into_par_iter()
        .map(|(mc, tc, lc)| run_one(&mc, &tc, &lc, ctx))
        .collect::<Result<Vec<_>>>()?;

    select(rows, grid)
}

/// Train and evaluate a single configuration.
pub fn run_one(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    ctx: &GridContext,
) -> Result<GridRow> {
    let tc = &ctx.train_ctx;
    let init = ModelInit {
        n_nodes: tc.table.n_nodes(),
        train_series: Some(tc.train_series_norm),
        propagation: tc.propagation,
    };
    let model = ForecastModel::new(model_cfg.clone(), &init)?;
    let (trained, history) = train(&model, tc, loss_cfg, train_cfg)?;
    let report = evaluate(
        &trained,
        model_cfg.kind.name(),
        loss_cfg.lambda,
        ctx.test,
        tc.table,
        tc.labeling,
        tc.normalizer,
        ctx.pooling,
    )?;
    Ok(GridRow {
        model_cfg: model_cfg.clone(),
        train_cfg: train_cfg.clone(),
        loss_cfg: loss_cfg.clone(),
        report,
        history,
    })
}

fn select(rows: Vec<GridRow>, grid: &GridSpec) -> Result<GridOutcome> {
    let baseline = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.loss_cfg.lambda == 0.0)
        .min_by(|a, b| a.1.report.rmse.partial_cmp(&b.1.report.rmse).unwrap())
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Validation("no lambda = 0 baseline row".into()))?;
    let budget = (1.0 + grid.rmse_tolerance) * rows[baseline].report.rmse;

    let mut best: Option<usize> = None;
    let mut constraint_satisfied = true;
    let candidate_better = |cand: usize, incumbent: usize, rows: &[GridRow]| -> bool {
        let cs = selection_score(&rows[cand].report, &rows[cand].loss_cfg);
        let is = selection_score(&rows[incumbent].report, &rows[incumbent].loss_cfg);
        if (cs - is).abs() < 1e-12 {
            rows[cand].report.rmse < rows[incumbent].report.rmse
        } else {
            cs < is
        }
    };
    for i in 0..rows.len() {
        if rows[i].report.rmse <= budget {
            best = Some(match best {
                Some(b) if !candidate_better(i, b, &rows) => b,
                _ => i,
            });
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            constraint_satisfied = false;
            let mut b = 0;
            for i in 1..rows.len() {
                if candidate_better(i, b, &rows) {
                    b = i;
                }
            }
            b
        }
    };
    Ok(GridOutcome {
        rows,
        best,
        baseline,
        constraint_satisfied,
    })
}

fn non_empty_or<T: Copy>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}
