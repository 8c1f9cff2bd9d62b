//! Run configuration files: a strict JSON schema validated before any
//! compute (unknown keys are rejected). See `docs/run-config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use slimopt::archspec::{builtin_specs, ArchSpec, CostObjective};
use slimopt::data::{load_idx, load_idx_pairs, synth_blobs, synth_spirals, Dataset};
use slimopt::drivers::{JoslimConfig, Method, WidthSampler};
use slimopt::nn::TrainConfig;
use slimopt::rng::derive_seed;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Built-in architecture name.
    pub arch: String,
    pub dataset: DatasetConfig,
    pub full_iters: usize,
    pub steps_per_iter: usize,
    pub samples_per_iter: usize,
    pub w0: f64,
    pub epsilon: f64,
    #[serde(default = "default_search_iters")]
    pub max_search_iters: usize,
    pub cost_objective: CostObjective,
    #[serde(default)]
    pub sampler: WidthSampler,
    #[serde(default)]
    pub gp_hyper_opt: bool,
    pub train: TrainConfig,
    /// Master seed; every random stream of the run derives from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Also render the Pareto front as an SVG after training.
    #[serde(default)]
    pub plot: bool,
}

fn default_search_iters() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Blobs {
        classes: usize,
        n: usize,
        dim: usize,
        noise: f64,
    },
    Spirals {
        classes: usize,
        n: usize,
        noise: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        val_images: Option<PathBuf>,
        #[serde(default)]
        val_labels: Option<PathBuf>,
    },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn build_spec(&self) -> Result<ArchSpec, CliError> {
        builtin_specs(&self.arch).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Materializes the dataset; synthetic generators draw from a stream
    /// derived from the run seed.
    pub fn build_dataset(&self) -> Result<Dataset, CliError> {
        let seed = derive_seed(self.seed, "dataset", 0);
        let dataset = match &self.dataset {
            DatasetConfig::Blobs {
                classes,
                n,
                dim,
                noise,
            } => synth_blobs(*classes, *n, *dim, *noise, seed),
            DatasetConfig::Spirals { classes, n, noise } => {
                synth_spirals(*classes, *n, *noise, seed)
            }
            DatasetConfig::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => match (val_images, val_labels) {
                (Some(vi), Some(vl)) => load_idx_pairs(train_images, train_labels, vi, vl),
                (None, None) => load_idx(train_images, train_labels),
                _ => {
                    return Err(CliError::Config(
                        "idx dataset needs both val_images and val_labels, or neither".into(),
                    ))
                }
            },
        };
        dataset.map_err(|e| CliError::Config(e.to_string()))
    }

    /// The driver config with the train seed pinned to the run seed (all
    /// randomness flows from one value).
    pub fn joslim_config(&self) -> JoslimConfig {
        let mut train = self.train.clone();
        train.seed = self.seed;
        JoslimConfig {
            full_iters: self.full_iters,
            steps_per_iter: self.steps_per_iter,
            samples_per_iter: self.samples_per_iter,
            w0: self.w0,
            epsilon: self.epsilon,
            max_search_iters: self.max_search_iters,
            cost_objective: self.cost_objective,
            sampler: self.sampler,
            gp_hyper_opt: self.gp_hyper_opt,
            train,
            seed: self.seed,
        }
    }
}
