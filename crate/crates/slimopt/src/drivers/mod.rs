//! End-to-end training procedures over one shared config and budget.
//!
//! Three drivers produce comparable [`RunArtifacts`]:
//! - [`joslim_train`]: alternates cost-targeted width search against GP
//!   surrogates with sandwich-rule weight updates, sharing the visited-width
//!   history across iterations;
//! - [`slim_train`]: uniform width multipliers only, no width search;
//! - [`bignas_train`]: trains on random layer-wise widths first, then runs
//!   the full search budget against the frozen weights.
//!
//! All three execute exactly `full_iters * steps_per_iter` gradient steps;
//! Joslim and the two-stage baseline visit exactly
//! `full_iters * samples_per_iter` widths.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archspec::{ArchSpec, CostObjective, WidthConfig};
use crate::data::{batches, Dataset, Split};
use crate::gp::{self, GpModel, UcbConfig};
use crate::mobo::{HistoryEntry, Surrogates, WidthBounds};
use crate::nn::{
    ce_loss, forward, Batch, NnError, SharedWeights, TrainConfig,
};
use crate::pareto::{non_dominated_sort, ObjectivePoint};
use crate::rng::{derive_seed, stream};

mod bignas;
mod checkpoint;
mod curve;
mod joslim;
mod slim;

pub use bignas::bignas_train;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use curve::{
    curve_to_csv, eval_curve_for_widths, eval_tradeoff_curve, pareto_to_csv, CurvePoint,
    TradeoffCurve,
};
pub use joslim::joslim_train;
pub use slim::slim_train;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Arch(#[from] crate::archspec::ArchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("surrogate fit: {0}")]
    Gp(#[from] crate::gp::GpError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Curve(#[from] crate::pareto::CurveError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Width-sampling strategy inside the search loop. Cost-targeted binary
/// search is the default; uniform-lambda random scalarization is the
/// ablation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WidthSampler {
    #[default]
    Ts2,
    Rs,
}

/// The three trainable procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Joslim,
    Slim,
    Bignas,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Joslim => "joslim",
            Method::Slim => "slim",
            Method::Bignas => "bignas",
        }
    }
}

/// Budget and search settings shared by every driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoslimConfig {
    /// Full alternation iterations (F).
    pub full_iters: usize,
    /// Gradient steps per full iteration (K); total steps = F * K.
    pub steps_per_iter: usize,
    /// Widths sampled per full iteration (M).
    pub samples_per_iter: usize,
    /// Width-multiplier lower bound; must equal the spec's.
    pub w0: f64,
    /// Relative cost tolerance of the targeted binary search.
    pub epsilon: f64,
    /// Cap on binary-search probes per sample.
    #[serde(default = "default_search_iters")]
    pub max_search_iters: usize,
    pub cost_objective: CostObjective,
    #[serde(default)]
    pub sampler: WidthSampler,
    /// Optimize GP hyperparameters each refit instead of fixed defaults.
    #[serde(default)]
    pub gp_hyper_opt: bool,
    pub train: TrainConfig,
    pub seed: u64,
}

fn default_search_iters() -> usize {
    10
}

impl JoslimConfig {
    pub fn total_steps(&self) -> usize {
        self.full_iters * self.steps_per_iter
    }

    pub fn validate(&self, spec: &ArchSpec) -> Result<(), DriverError> {
        let bad = |msg: String| Err(DriverError::InvalidConfig(msg));
        if self.full_iters == 0 {
            return bad("full_iters must be at least 1".into());
        }
        if self.steps_per_iter == 0 {
            return bad("steps_per_iter must be at least 1".into());
        }
        if self.samples_per_iter == 0 {
            return bad("samples_per_iter must be at least 1".into());
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon = {} must be positive", self.epsilon));
        }
        if self.max_search_iters == 0 {
            return bad("max_search_iters must be at least 1".into());
        }
        if (self.w0 - spec.w0).abs() > 1e-12 {
            return bad(format!(
                "w0 = {} does not match spec `{}` (w0 = {})",
                self.w0, spec.name, spec.w0
            ));
        }
        self.train.validate()?;
        Ok(())
    }
}

/// One full iteration's diagnostics, serialized as a JSONL row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterLog {
    pub iteration: usize,
    /// Binary-search probes averaged over this iteration's samples (1.0 for
    /// random scalarization, 0.0 where no surrogate search ran).
    pub mean_search_iters: f64,
    /// Widths added to the history this iteration.
    pub widths_sampled: Vec<Vec<f64>>,
    /// Scalarization weights used for those widths.
    pub lambdas: Vec<f64>,
    /// Target costs drawn by the cost-targeted sampler (empty otherwise).
    pub target_costs: Vec<f64>,
    /// Relative cost gap of each accepted width to its target.
    pub rel_gaps: Vec<f64>,
    /// Full-width training loss, averaged over the iteration's steps.
    pub mean_full_loss: f64,
    /// Sub-width training loss, averaged over widths and steps.
    pub mean_width_loss: f64,
    pub learning_rate: f64,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub spec_name: String,
    pub method: Method,
    pub weights: SharedWeights,
    /// Every width visited by the search, with reevaluated loss and exact
    /// cost.
    pub history: Vec<HistoryEntry>,
    /// Indices into `history` forming the Pareto front under
    /// (reevaluated train loss, cost).
    pub pareto: Vec<usize>,
    /// Top-1 training error of each front member at the final reevaluation,
    /// aligned with `pareto`.
    pub pareto_train_errors: Vec<f64>,
    pub iter_logs: Vec<IterLog>,
    pub steps_done: usize,
    pub seed: u64,
}

impl RunArtifacts {
    /// Re-checks the artifact invariants: stored costs are bit-exact
    /// recomputations, the Pareto set is front 0 of the history, and no
    /// history entry dominates a front member.
    pub fn verify(&self, spec: &ArchSpec, objective: CostObjective) -> Result<(), DriverError> {
        for entry in &self.history {
            let recomputed = spec.cost(&entry.width, objective)?;
            if recomputed != entry.cost {
                return Err(DriverError::InvalidConfig(format!(
                    "history audit failed: stored cost {} vs recomputed {}",
                    entry.cost, recomputed
                )));
            }
        }
        let front = pareto_front_indices(&self.history);
        if front != self.pareto {
            return Err(DriverError::InvalidConfig(
                "pareto set is not front 0 of the history".into(),
            ));
        }
        for (i, entry) in self.history.iter().enumerate() {
            for &p in &self.pareto {
                let member = &self.history[p];
                let dominates = entry.ce <= member.ce
                    && entry.cost <= member.cost
                    && (entry.ce < member.ce || entry.cost < member.cost);
                if dominates && !self.pareto.contains(&i) {
                    return Err(DriverError::InvalidConfig(format!(
                        "history entry {i} dominates front member {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Front-0 indices of the history under (ce, cost), cost ascending.
pub fn pareto_front_indices(history: &[HistoryEntry]) -> Vec<usize> {
    if history.is_empty() {
        return Vec::new();
    }
    let points: Vec<ObjectivePoint> = history
        .iter()
        .enumerate()
        .map(|(id, e)| ObjectivePoint {
            id,
            f1: e.ce,
            f2: e.cost,
        })
        .collect();
    non_dominated_sort(&points)[0].iter().map(|p| p.id).collect()
}

/// Endless minibatch stream cycling seeded epoch shuffles.
pub(crate) struct BatchCursor<'a> {
    split: &'a Split,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    queue: std::collections::VecDeque<Batch>,
}

impl<'a> BatchCursor<'a> {
    pub(crate) fn new(split: &'a Split, batch_size: usize, seed: u64) -> BatchCursor<'a> {
        BatchCursor {
            split,
            batch_size,
            seed,
            epoch: 0,
            queue: std::collections::VecDeque::new(),
        }
    }

    pub(crate) fn next_batch(&mut self) -> Batch {
        if self.queue.is_empty() {
            self.queue = batches(self.split, self.batch_size, self.seed, self.epoch)
                .into_iter()
                .collect();
            self.epoch += 1;
        }
        self.queue.pop_front().expect("split is non-empty")
    }
}

/// Plain cross-entropy and top-1 error of one width on one batch against
/// frozen weights.
pub(crate) fn batch_metrics(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
) -> Result<(f64, f64), NnError> {
    let logits = forward(weights, spec, width, batch)?;
    let loss = ce_loss(&logits, &batch.labels, 0.0)?;
    let classes = logits.len() / batch.len();
    let wrong = batch
        .labels
        .iter()
        .enumerate()
        .filter(|&(row, &label)| {
            let slice = &logits[row * classes..(row + 1) * classes];
            let mut best = 0usize;
            for (class, &v) in slice.iter().enumerate() {
                if v > slice[best] {
                    best = class;
                }
            }
            best != label as usize
        })
        .count();
    Ok((loss, wrong as f64 / batch.len() as f64))
}

/// Plain cross-entropy of one width on one batch against frozen weights.
pub(crate) fn batch_ce(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
) -> Result<f64, NnError> {
    Ok(batch_metrics(weights, spec, width, batch)?.0)
}

/// Reevaluates every history entry's loss on `batch` (Joslim's per-iteration
/// refresh that keeps the GP targets faithful to the current weights).
/// Returns the per-entry batch top-1 errors alongside.
pub(crate) fn reevaluate_history(
    history: &mut [HistoryEntry],
    weights: &SharedWeights,
    spec: &ArchSpec,
    batch: &Batch,
) -> Result<Vec<f64>, NnError> {
    let mut errors = Vec::with_capacity(history.len());
    for entry in history {
        let (ce, error) = batch_metrics(weights, spec, &entry.width, batch)?;
        entry.ce = ce;
        errors.push(error);
    }
    Ok(errors)
}

/// Running-min/max loss normalization plus both GP fits for one iteration.
pub(crate) struct FittedSurrogates {
    pub g_ce: GpModel,
    pub g_cost: GpModel,
    pub ce_min: f64,
    pub ce_max: f64,
}

impl FittedSurrogates {
    pub(crate) fn fit(
        history: &[HistoryEntry],
        bounds: WidthBounds,
        hyper_opt: bool,
        seed: u64,
        iteration: u64,
    ) -> Result<FittedSurrogates, DriverError> {
        let inputs: Vec<Vec<f64>> = history.iter().map(|e| bounds.normalize(&e.width)).collect();
        let ce: Vec<f64> = history.iter().map(|e| e.ce).collect();
        let cost: Vec<f64> = history.iter().map(|e| e.cost).collect();
        let (g_ce, g_cost) = if hyper_opt {
            (
                gp::fit(&inputs, &ce, true, derive_seed(seed, "gp-ce", iteration))?,
                gp::fit(&inputs, &cost, true, derive_seed(seed, "gp-cost", iteration))?,
            )
        } else {
            // fixed hyperparameters, but the loss targets carry minibatch
            // noise while the cost targets are exact
            let dims = bounds.dims;
            let mut ce_hyper = gp::GpHyperparams::defaults(dims);
            ce_hyper.noise_variance = 1e-2;
            (
                gp::fit_with(&inputs, &ce, ce_hyper)?,
                gp::fit_with(&inputs, &cost, gp::GpHyperparams::defaults(dims))?,
            )
        };
        let ce_min = ce.iter().cloned().fold(f64::INFINITY, f64::min);
        let ce_max = ce.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(FittedSurrogates {
            g_ce,
            g_cost,
            ce_min,
            ce_max,
        })
    }

    pub(crate) fn as_surrogates(&self, full_cost: f64, bounds: WidthBounds) -> Surrogates<'_> {
        Surrogates {
            g_ce: &self.g_ce,
            g_cost: &self.g_cost,
            beta: UcbConfig::default().beta,
            ce_min: self.ce_min,
            ce_max: self.ce_max,
            full_cost,
            bounds,
        }
    }
}

/// A bootstrap draw for the first search round, when the history is empty
/// and no surrogate exists yet: a uniform-multiplier width with the scalar
/// drawn from `[w0, 1]`. Independent per-component draws would concentrate
/// near one mid-range cost; uniform multipliers seed the surrogates across
/// the whole cost axis.
pub(crate) fn random_width(spec: &ArchSpec, seed: u64, index: u64) -> WidthConfig {
    let mut rng = stream(seed, "bootstrap-width", index);
    spec.uniform_width(rng.random_range(spec.w0..=1.0))
}

/// Runs the method chosen by the config.
pub fn train(
    method: Method,
    spec: &ArchSpec,
    dataset: &Dataset,
    config: &JoslimConfig,
) -> Result<RunArtifacts, DriverError> {
    match method {
        Method::Joslim => joslim_train(spec, dataset, config),
        Method::Slim => slim_train(spec, dataset, config),
        Method::Bignas => bignas_train(spec, dataset, config),
    }
}

/// Shared run state and the common finishing step.
pub(crate) struct RunState<'a> {
    pub spec: &'a ArchSpec,
    pub split: Split,
    pub config: &'a JoslimConfig,
    pub low_cost: f64,
    pub full_cost: f64,
}

impl<'a> RunState<'a> {
    pub(crate) fn prepare(
        spec: &'a ArchSpec,
        dataset: &Dataset,
        config: &'a JoslimConfig,
    ) -> Result<RunState<'a>, DriverError> {
        config.validate(spec)?;
        if dataset.train.is_empty() {
            return Err(DriverError::Nn(NnError::EmptyDataset));
        }
        let split = dataset.train.fit_to_input(spec.input_resolution)?;
        let low_cost = spec.cost(&spec.min_width(), config.cost_objective)?;
        let full_cost = spec.cost(&spec.full_width(), config.cost_objective)?;
        Ok(RunState {
            spec,
            split,
            config,
            low_cost,
            full_cost,
        })
    }

    pub(crate) fn cost_of(&self, width: &WidthConfig) -> f64 {
        self.spec
            .cost(width, self.config.cost_objective)
            .expect("sampler widths stay inside the box")
    }

    /// Final reevaluation of every visited width over the whole training
    /// split, then the non-dominated sort that produces the Pareto set.
    /// (The per-iteration refreshes stay minibatch-sized; the final sort is
    /// computed once, so it can afford the full pass.)
    pub(crate) fn finish(
        &self,
        method: Method,
        weights: SharedWeights,
        mut history: Vec<HistoryEntry>,
        iter_logs: Vec<IterLog>,
        steps_done: usize,
    ) -> Result<RunArtifacts, DriverError> {
        let eval = crate::data::eval_batches(&self.split, 256);
        let mut errors = Vec::with_capacity(history.len());
        for entry in &mut history {
            let metrics = crate::nn::evaluate(&weights, self.spec, &entry.width, &eval)?;
            entry.ce = metrics.cross_entropy;
            errors.push(metrics.top1_error);
        }
        let pareto = pareto_front_indices(&history);
        let pareto_train_errors = pareto.iter().map(|&i| errors[i]).collect();
        Ok(RunArtifacts {
            spec_name: self.spec.name.clone(),
            method,
            weights,
            history,
            pareto,
            pareto_train_errors,
            iter_logs,
            steps_done,
            seed: self.config.seed,
        })
    }
}
