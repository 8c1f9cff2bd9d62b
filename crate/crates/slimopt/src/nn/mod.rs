//! Deterministic CPU neural-network engine with width-sliced shared weights.
//!
//! One [`SharedWeights`] value stores full-width tensors for every layer of
//! an [`ArchSpec`](crate::archspec::ArchSpec). A sub-network at some width
//! uses the *leading* channel slices of each tensor; forward, backward, and
//! update all index into the same storage, so training any width updates the
//! shared parameters in place. All tensor math is `f32` with fixed loop
//! order, loss accounting is `f64`, and every run is bit-reproducible from
//! its seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archspec::{ArchSpec, LayerKind};
use crate::rng::stream;
use rand::Rng;

mod engine;
mod train;

pub use engine::forward;
pub use train::{
    ce_loss, evaluate, grad, loss_and_grad, sgd_step, slimmable_train_step, EvalMetrics,
    StepStats, Target,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Arch(#[from] crate::archspec::ArchError),
    #[error("batch shape {got:?} does not match spec input {expected:?} (w, h, c)")]
    ShapeMismatch {
        expected: (u32, u32, u32),
        got: (u32, u32, u32),
    },
    #[error("batch has {inputs} input rows but {labels} labels")]
    LabelCountMismatch { inputs: usize, labels: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("non-finite logits (first at row {row}, class {class})")]
    NonFiniteLogits { row: usize, class: usize },
    #[error("gradient/parameter shape mismatch at layer {layer}")]
    GradientShapeMismatch { layer: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint blob has {got} bytes, spec `{name}` needs {expected}")]
    BlobSizeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
}

/// Learning-rate schedule over a fixed step horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    /// Half-cosine from the base rate to exactly zero at the final step.
    Cosine,
    /// Straight line from the base rate to exactly zero at the final step.
    LinearDecay,
    /// `rate * gamma^step`.
    Exponential(f64),
}

/// Hyperparameters for sandwich-rule training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub batch_size: usize,
    /// Advisory epoch count for standalone loops; the search drivers derive
    /// their step budget from full iterations and steps per iteration.
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Train sub-widths against the full network's soft predictions instead
    /// of the hard labels.
    #[serde(default = "default_distillation")]
    pub inplace_distillation: bool,
    /// Filled from the run seed by the drivers; config files may omit it.
    #[serde(default)]
    pub seed: u64,
}

fn default_epochs() -> usize {
    1
}

fn default_distillation() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            lr_schedule: LrSchedule::Cosine,
            momentum: 0.9,
            weight_decay: 1e-4,
            label_smoothing: 0.0,
            batch_size: 32,
            epochs: 1,
            inplace_distillation: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |msg: String| Err(NnError::InvalidConfig(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {}", self.learning_rate));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return bad(format!("momentum = {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay = {}", self.weight_decay));
        }
        if !(self.label_smoothing >= 0.0 && self.label_smoothing < 1.0) {
            return bad(format!("label_smoothing = {}", self.label_smoothing));
        }
        if self.batch_size == 0 {
            return bad("batch_size = 0".to_string());
        }
        if let LrSchedule::Exponential(gamma) = self.lr_schedule {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return bad(format!("exponential gamma = {gamma}"));
            }
        }
        Ok(())
    }

    /// Scheduled rate at `step` of `total_steps`. Cosine and linear reach
    /// exactly zero at the final step.
    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        let horizon = total_steps.saturating_sub(1).max(1) as f64;
        let t = (step as f64 / horizon).min(1.0);
        match self.lr_schedule {
            LrSchedule::Cosine => {
                self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
            LrSchedule::LinearDecay => self.learning_rate * (1.0 - t),
            LrSchedule::Exponential(gamma) => self.learning_rate * gamma.powi(step as i32),
        }
    }
}

/// A minibatch in NCHW layout: `inputs[((s*C + c)*H + y)*W + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f32>,
    pub labels: Vec<u32>,
    /// Per-sample shape as (width, height, channels), matching the spec's
    /// input resolution convention.
    pub shape: (u32, u32, u32),
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check_against(&self, spec: &ArchSpec, classes: usize) -> Result<(), NnError> {
        if self.shape != spec.input_resolution {
            return Err(NnError::ShapeMismatch {
                expected: spec.input_resolution,
                got: self.shape,
            });
        }
        let (w, h, c) = self.shape;
        let per_sample = (w * h * c) as usize;
        if self.inputs.len() != per_sample * self.labels.len() {
            return Err(NnError::LabelCountMismatch {
                inputs: self.inputs.len() / per_sample.max(1),
                labels: self.labels.len(),
            });
        }
        for &label in &self.labels {
            if label as usize >= classes {
                return Err(NnError::LabelOutOfRange { label, classes });
            }
        }
        Ok(())
    }
}

/// Weight and bias storage for one layer. Weights are row-major
/// `[out_base, in_base/groups_base, kernel_h, kernel_w]`; weightless layers
/// hold empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ParamBlock {
    fn zeros_like(other: &ParamBlock) -> ParamBlock {
        ParamBlock {
            weight: vec![0.0; other.weight.len()],
            bias: vec![0.0; other.bias.len()],
        }
    }

    fn fill(&mut self, value: f32) {
        self.weight.fill(value);
        self.bias.fill(value);
    }
}

/// Full-width parameters of every layer; sub-networks view leading slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedWeights {
    pub layers: Vec<ParamBlock>,
}

/// Gradient accumulator with the same shapes as [`SharedWeights`]; entries
/// outside the trained slices stay exactly zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<ParamBlock>,
}

impl Gradients {
    pub fn zeros_like(weights: &SharedWeights) -> Gradients {
        Gradients {
            layers: weights.layers.iter().map(ParamBlock::zeros_like).collect(),
        }
    }

    pub fn reset(&mut self) {
        for layer in &mut self.layers {
            layer.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in mine.weight.iter_mut().zip(&theirs.weight) {
                *a += b;
            }
            for (a, b) in mine.bias.iter_mut().zip(&theirs.bias) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f32) {
        for layer in &mut self.layers {
            for value in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *value *= factor;
            }
        }
    }
}

/// Momentum buffers for SGD, one velocity per parameter.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub velocity: Vec<ParamBlock>,
}

impl SgdState {
    pub fn zeros_like(weights: &SharedWeights) -> SgdState {
        SgdState {
            velocity: weights.layers.iter().map(ParamBlock::zeros_like).collect(),
        }
    }
}

/// Per-layer weight element count at full width (weight + bias).
fn param_shape(spec: &ArchSpec, layer: usize) -> (usize, usize) {
    let l = &spec.layers[layer];
    if !l.kind.has_weights() {
        return (0, 0);
    }
    let in_group = (l.in_channels_base / l.groups) as usize;
    let weight =
        l.out_channels_base as usize * in_group * l.kernel_h as usize * l.kernel_w as usize;
    (weight, l.out_channels_base as usize)
}

impl SharedWeights {
    /// Fan-in-scaled uniform initialization at full width
    /// (`U(-sqrt(6/fan_in), sqrt(6/fan_in))`), biases zero. Sub-networks
    /// inherit their slices.
    pub fn init(spec: &ArchSpec, seed: u64) -> SharedWeights {
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let (w_len, b_len) = param_shape(spec, l.id);
                let mut block = ParamBlock {
                    weight: vec![0.0; w_len],
                    bias: vec![0.0; b_len],
                };
                if w_len > 0 {
                    let fan_in = (l.in_channels_base / l.groups) as f64
                        * f64::from(l.kernel_h)
                        * f64::from(l.kernel_w);
                    let bound = (6.0 / fan_in).sqrt() as f32;
                    let mut rng = stream(seed, "init", l.id as u64);
                    for value in &mut block.weight {
                        *value = rng.random_range(-bound..bound);
                    }
                }
                block
            })
            .collect();
        SharedWeights { layers }
    }

    /// Total parameter count (weights + biases).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Serializes every tensor in layer order (weight then bias per layer)
    /// as little-endian `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(self.param_count() * 4);
        for layer in &self.layers {
            for value in layer.weight.iter().chain(layer.bias.iter()) {
                bytes.extend_from_slice(&value.to_le_bytes());
            }
        }
        bytes
    }

    /// Rebuilds weights for `spec` from a [`Self::to_bytes`] blob.
    pub fn from_bytes(spec: &ArchSpec, bytes: &[u8]) -> Result<SharedWeights, NnError> {
        let expected: usize = (0..spec.layers.len())
            .map(|l| {
                let (w, b) = param_shape(spec, l);
                (w + b) * 4
            })
            .sum();
        if bytes.len() != expected {
            return Err(NnError::BlobSizeMismatch {
                name: spec.name.clone(),
                expected,
                got: bytes.len(),
            });
        }
        let mut offset = 0;
        let mut read = |len: usize| -> Vec<f32> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let raw: [u8; 4] = bytes[offset..offset + 4].try_into().expect("sized above");
                out.push(f32::from_le_bytes(raw));
                offset += 4;
            }
            out
        };
        let layers = (0..spec.layers.len())
            .map(|l| {
                let (w_len, b_len) = param_shape(spec, l);
                ParamBlock {
                    weight: read(w_len),
                    bias: read(b_len),
                }
            })
            .collect();
        Ok(SharedWeights { layers })
    }
}

/// Number of output classes of the spec's classifier head.
pub fn class_count(spec: &ArchSpec) -> usize {
    spec.layers
        .iter()
        .rev()
        .find(|l| l.kind == LayerKind::ClassifierDense)
        .map(|l| l.out_channels_base as usize)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspec::builtin_specs;

    #[test]
    fn init_is_seed_deterministic_and_slices_inherit() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let a = SharedWeights::init(&spec, 42);
        let b = SharedWeights::init(&spec, 42);
        assert_eq!(a, b);
        let c = SharedWeights::init(&spec, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn blob_round_trip_is_exact() {
        let spec = builtin_specs("tiny-mlp").unwrap();
        let weights = SharedWeights::init(&spec, 7);
        let blob = weights.to_bytes();
        assert_eq!(blob.len(), weights.param_count() * 4);
        let loaded = SharedWeights::from_bytes(&spec, &blob).unwrap();
        assert_eq!(weights, loaded);
    }

    #[test]
    fn blob_size_mismatch_is_rejected() {
        let spec = builtin_specs("tiny-mlp").unwrap();
        let weights = SharedWeights::init(&spec, 7);
        let mut blob = weights.to_bytes();
        blob.pop();
        assert!(matches!(
            SharedWeights::from_bytes(&spec, &blob),
            Err(NnError::BlobSizeMismatch { .. })
        ));
    }

    #[test]
    fn schedules_hit_their_endpoints() {
        let mut config = TrainConfig {
            learning_rate: 0.4,
            ..TrainConfig::default()
        };
        assert_eq!(config.learning_rate_at(0, 100), 0.4);
        assert_eq!(config.learning_rate_at(99, 100), 0.0);

        config.lr_schedule = LrSchedule::LinearDecay;
        assert_eq!(config.learning_rate_at(0, 100), 0.4);
        assert_eq!(config.learning_rate_at(99, 100), 0.0);
        assert!((config.learning_rate_at(33, 100) - 0.4 * (1.0 - 33.0 / 99.0)).abs() < 1e-15);

        config.lr_schedule = LrSchedule::Exponential(0.9);
        assert!((config.learning_rate_at(10, 100) - 0.4 * 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn config_validation_names_offending_fields() {
        let mut config = TrainConfig::default();
        config.label_smoothing = 1.0;
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("label_smoothing"));

        let mut config = TrainConfig::default();
        config.batch_size = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn class_counts_of_builtins() {
        assert_eq!(class_count(&builtin_specs("tiny-mlp").unwrap()), 4);
        assert_eq!(class_count(&builtin_specs("tiny-resnet").unwrap()), 3);
        assert_eq!(class_count(&builtin_specs("mobilenetv2-cost").unwrap()), 1000);
    }
}
