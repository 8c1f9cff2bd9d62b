//! Architecture specifications: layer graphs, tied width multipliers, and the
//! FLOPs / inference-memory cost models.
//!
//! An [`ArchSpec`] is a topologically ordered layer DAG plus a partition of
//! its width-controllable layers into *tie groups*. Each tie group is driven
//! by one component of a [`WidthConfig`]; layers joined by a residual add and
//! depthwise convolutions tied to their preceding pointwise convolution share
//! a group so every width in the box resolves to a well-formed network.
//!
//! Costs are counted in multiply-accumulate operations (MACs) and in peak
//! scalar elements of inference memory at batch size 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building, validating, or costing architectures.
#[derive(Debug, Error)]
pub enum ArchError {
    #[error("unknown architecture `{0}`")]
    UnknownArch(String),
    #[error("width has {got} components, spec `{name}` has {expected} tie groups")]
    DimensionMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("width component {index} = {value} outside [{lo}, 1]")]
    WidthOutOfBounds { index: usize, value: f64, lo: f64 },
    #[error("layer {layer}: groups {groups} does not divide channels {channels}")]
    GroupsIndivisible {
        layer: usize,
        groups: u32,
        channels: u32,
    },
    #[error("invalid architecture `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("architecture JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// What a layer computes. Convolution and dense layers apply ReLU; the
/// classifier head emits raw logits; adds and pools are arithmetic only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Conv,
    Dense,
    Add,
    GlobalPool,
    ClassifierDense,
}

impl LayerKind {
    /// Layers that own weights and contribute MACs.
    pub fn has_weights(self) -> bool {
        matches!(
            self,
            LayerKind::Conv | LayerKind::Dense | LayerKind::ClassifierDense
        )
    }

    /// Layers whose output width may be driven by a tie group.
    pub fn is_width_controllable(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Dense)
    }
}

/// One layer of the graph. `input_sources` lists producing layer ids; an
/// empty list means the network input. Spatial sizes are resolved from the
/// input resolution when the spec is constructed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub id: usize,
    pub kind: LayerKind,
    pub kernel_w: u32,
    pub kernel_h: u32,
    pub stride: u32,
    pub groups: u32,
    pub in_channels_base: u32,
    pub out_channels_base: u32,
    pub input_sources: Vec<usize>,
    pub spatial_out_w: u32,
    pub spatial_out_h: u32,
}

impl LayerSpec {
    fn weight_free(kind: LayerKind, id: usize, sources: Vec<usize>) -> Self {
        LayerSpec {
            id,
            kind,
            kernel_w: 1,
            kernel_h: 1,
            stride: 1,
            groups: 1,
            in_channels_base: 0,
            out_channels_base: 0,
            input_sources: sources,
            spatial_out_w: 0,
            spatial_out_h: 0,
        }
    }
}

/// A layer graph with tie groups and the width-multiplier lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    /// Partition of width-controllable layer ids; group `g` is driven by
    /// width component `a[g]`.
    pub tie_groups: Vec<Vec<usize>>,
    /// Network input as (width, height, channels).
    pub input_resolution: (u32, u32, u32),
    /// Lower bound of every width multiplier, in (0, 1].
    pub w0: f64,
}

/// A layer-wise width-multiplier vector, each component in `[w0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthConfig(pub Vec<f64>);

impl WidthConfig {
    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// True when every component equals 1 (the full network).
    pub fn is_full(&self) -> bool {
        self.0.iter().all(|&a| a == 1.0)
    }
}

/// Channel counts and spatial sizes of one layer after width resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcreteLayer {
    pub in_channels: u32,
    pub out_channels: u32,
    pub groups: u32,
    pub spatial_in_w: u32,
    pub spatial_in_h: u32,
    pub spatial_out_w: u32,
    pub spatial_out_h: u32,
}

/// A fully resolved sub-network: integer channel counts for every layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteArch {
    pub layers: Vec<ConcreteLayer>,
}

/// Per-layer cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub layer: usize,
    pub flops: u64,
    pub memory_elements: u64,
}

/// MAC count and peak inference memory for one (spec, width) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub flops: u64,
    pub memory_elements: u64,
    pub per_layer: Vec<LayerCost>,
}

/// Cost axis selector for the search objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostObjective {
    Flops,
    Memory,
}

/// Rounds a scaled channel count: `max(1, floor(a * base))`, no
/// multiple-of-8 quantization. Truncation reproduces the published
/// MobileNetV2 MAC counts at reduced widths; the full model stays exactly
/// reachable at `a = 1`.
pub fn scale_channels(multiplier: f64, base: u32) -> u32 {
    let scaled = (multiplier * f64::from(base)).floor() as u32;
    scaled.max(1)
}

impl ArchSpec {
    /// Builds a spec from layer descriptors, resolving spatial sizes from the
    /// input resolution and validating every structural invariant.
    pub fn new(
        name: &str,
        mut layers: Vec<LayerSpec>,
        tie_groups: Vec<Vec<usize>>,
        input_resolution: (u32, u32, u32),
        w0: f64,
    ) -> Result<ArchSpec, ArchError> {
        resolve_spatial(name, &mut layers, input_resolution)?;
        let spec = ArchSpec {
            name: name.to_string(),
            layers,
            tie_groups,
            input_resolution,
            w0,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Number of tie groups, i.e. the width-vector dimension `d`.
    pub fn width_dims(&self) -> usize {
        self.tie_groups.len()
    }

    /// The width vector with every component set to `m`.
    pub fn uniform_width(&self, m: f64) -> WidthConfig {
        WidthConfig(vec![m; self.width_dims()])
    }

    /// The full network (all multipliers 1).
    pub fn full_width(&self) -> WidthConfig {
        self.uniform_width(1.0)
    }

    /// The smallest network (all multipliers `w0`).
    pub fn min_width(&self) -> WidthConfig {
        self.uniform_width(self.w0)
    }

    fn invalid(&self, reason: String) -> ArchError {
        ArchError::InvalidSpec {
            name: self.name.clone(),
            reason,
        }
    }

    /// Checks ordering, tie-group partition, add/depthwise consistency, and
    /// the classifier rule. `ArchSpec::new` and JSON loading both call this.
    pub fn validate(&self) -> Result<(), ArchError> {
        if !(self.w0 > 0.0 && self.w0 <= 1.0) {
            return Err(self.invalid(format!("w0 = {} outside (0, 1]", self.w0)));
        }
        for (pos, layer) in self.layers.iter().enumerate() {
            if layer.id != pos {
                return Err(self.invalid(format!(
                    "layer ids must be dense and ordered, found id {} at position {pos}",
                    layer.id
                )));
            }
            for &src in &layer.input_sources {
                if src >= pos {
                    return Err(self.invalid(format!(
                        "layer {pos} consumes layer {src}, which does not precede it"
                    )));
                }
            }
            match layer.kind {
                LayerKind::Add => {
                    if layer.input_sources.len() != 2 {
                        return Err(
                            self.invalid(format!("add layer {pos} needs exactly 2 sources"))
                        );
                    }
                }
                _ => {
                    if layer.input_sources.len() > 1 {
                        return Err(self.invalid(format!("layer {pos} has multiple sources")));
                    }
                }
            }
        }

        // Tie groups partition the width-controllable layers.
        let mut group_of = vec![None; self.layers.len()];
        for (g, members) in self.tie_groups.iter().enumerate() {
            if members.is_empty() {
                return Err(self.invalid(format!("tie group {g} is empty")));
            }
            for &id in members {
                let layer = self
                    .layers
                    .get(id)
                    .ok_or_else(|| self.invalid(format!("tie group {g} names layer {id}")))?;
                if !layer.kind.is_width_controllable() {
                    return Err(self.invalid(format!(
                        "tie group {g} contains non-scalable layer {id} ({:?})",
                        layer.kind
                    )));
                }
                if group_of[id].replace(g).is_some() {
                    return Err(self.invalid(format!("layer {id} is in two tie groups")));
                }
            }
        }
        for layer in &self.layers {
            if layer.kind.is_width_controllable() && group_of[layer.id].is_none() {
                return Err(self.invalid(format!("layer {} belongs to no tie group", layer.id)));
            }
        }

        // The add and depthwise constraints must hold for every width in the
        // box, which is exactly the corner set {w0, 1}^d restricted to the
        // groups involved; checking the two uniform corners covers them
        // because each constraint compares channel counts driven by single
        // groups.
        self.channel_identity_check(&mut group_of.clone())?;
        for width in [self.min_width(), self.full_width()] {
            self.resolve_channels(&width)?;
        }
        Ok(())
    }

    /// Structural check that both inputs of every add carry channels driven
    /// by the same tie group (or equal fixed counts), so they match at every
    /// width, not just at sampled corners.
    fn channel_identity_check(&self, group_of: &mut [Option<usize>]) -> Result<(), ArchError> {
        // identity = (driving tie group or None, base channel count)
        let mut identity: Vec<(Option<usize>, u32)> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let own = match layer.kind {
                LayerKind::Conv | LayerKind::Dense => (group_of[layer.id], layer.out_channels_base),
                LayerKind::ClassifierDense => (None, layer.out_channels_base),
                LayerKind::GlobalPool => identity[layer.input_sources[0]],
                LayerKind::Add => {
                    let a = identity[layer.input_sources[0]];
                    let b = identity[layer.input_sources[1]];
                    if a != b {
                        return Err(self.invalid(format!(
                            "add layer {} mixes channel identities {a:?} and {b:?}",
                            layer.id
                        )));
                    }
                    a
                }
            };
            identity.push(own);
        }
        Ok(())
    }

    fn check_width(&self, width: &WidthConfig) -> Result<(), ArchError> {
        if width.dims() != self.width_dims() {
            return Err(ArchError::DimensionMismatch {
                name: self.name.clone(),
                expected: self.width_dims(),
                got: width.dims(),
            });
        }
        for (index, &value) in width.as_slice().iter().enumerate() {
            if !(value >= self.w0 && value <= 1.0) {
                return Err(ArchError::WidthOutOfBounds {
                    index,
                    value,
                    lo: self.w0,
                });
            }
        }
        Ok(())
    }

    /// Resolves a width vector to concrete per-layer channel counts.
    ///
    /// A layer in tie group `g` gets `max(1, floor(a_g * base))` output
    /// channels; adds and pools inherit their sources.
    pub fn resolve_channels(&self, width: &WidthConfig) -> Result<ConcreteArch, ArchError> {
        self.check_width(width)?;
        let mut group_of = vec![None; self.layers.len()];
        for (g, members) in self.tie_groups.iter().enumerate() {
            for &id in members {
                group_of[id] = Some(g);
            }
        }

        let (in_w, in_h, in_c) = self.input_resolution;
        let mut layers: Vec<ConcreteLayer> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            // (spatial, channels) of the upstream tensor
            let (sw, sh, sc) = match layer.input_sources.first() {
                None => (in_w, in_h, in_c),
                Some(&src) => {
                    let s = &layers[src];
                    (s.spatial_out_w, s.spatial_out_h, s.out_channels)
                }
            };
            let out_channels = match layer.kind {
                LayerKind::Conv | LayerKind::Dense => {
                    let g = group_of[layer.id].expect("validated partition");
                    scale_channels(width.as_slice()[g], layer.out_channels_base)
                }
                LayerKind::ClassifierDense => layer.out_channels_base,
                LayerKind::GlobalPool => sc,
                LayerKind::Add => {
                    let other = &layers[layer.input_sources[1]];
                    if other.out_channels != sc
                        || other.spatial_out_w != sw
                        || other.spatial_out_h != sh
                    {
                        return Err(self.invalid(format!(
                            "add layer {} inputs disagree: {}x{}x{} vs {}x{}x{}",
                            layer.id,
                            sw,
                            sh,
                            sc,
                            other.spatial_out_w,
                            other.spatial_out_h,
                            other.out_channels,
                        )));
                    }
                    sc
                }
            };
            let groups = if layer.kind.has_weights() {
                resolve_groups(layer, sc, out_channels)?
            } else {
                1
            };
            layers.push(ConcreteLayer {
                in_channels: sc,
                out_channels,
                groups,
                spatial_in_w: sw,
                spatial_in_h: sh,
                spatial_out_w: layer.spatial_out_w,
                spatial_out_h: layer.spatial_out_h,
            });
        }
        Ok(ConcreteArch { layers })
    }

    /// MAC count of the sub-network at `width`: for every weighted layer,
    /// `K_w * K_h * C_in * C_out * W_out * H_out / G`. Adds and pools are
    /// free; biases and activations are not counted.
    pub fn count_flops(&self, width: &WidthConfig) -> Result<u64, ArchError> {
        Ok(self.cost_report(width)?.flops)
    }

    /// Peak inference memory in scalar elements at batch size 1: the maximum
    /// over layers of input + output feature maps, weights, and live skip
    /// tensors.
    pub fn count_memory(&self, width: &WidthConfig) -> Result<u64, ArchError> {
        Ok(self.cost_report(width)?.memory_elements)
    }

    /// Cost along the requested axis as a float, for search code.
    pub fn cost(&self, width: &WidthConfig, objective: CostObjective) -> Result<f64, ArchError> {
        let report = self.cost_report(width)?;
        Ok(match objective {
            CostObjective::Flops => report.flops as f64,
            CostObjective::Memory => report.memory_elements as f64,
        })
    }

    /// Full per-layer cost breakdown. Deterministic: identical inputs yield
    /// identical reports.
    pub fn cost_report(&self, width: &WidthConfig) -> Result<CostReport, ArchError> {
        let concrete = self.resolve_channels(width)?;
        // Skip tensors: any tensor consumed by an add is held from its
        // producing layer to the consuming add. Its storage at the endpoints
        // is already counted there as FM_out / FM_in, so the Skip term covers
        // the layers strictly between.
        let mut live_skip_channels = vec![0u64; self.layers.len()];
        for layer in &self.layers {
            if layer.kind != LayerKind::Add {
                continue;
            }
            for &src in &layer.input_sources {
                let channels = u64::from(concrete.layers[src].out_channels);
                for slot in live_skip_channels
                    .iter_mut()
                    .take(layer.id)
                    .skip(src + 1)
                {
                    *slot += channels;
                }
            }
        }

        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut total_flops = 0u64;
        let mut peak_memory = 0u64;
        for (layer, c) in self.layers.iter().zip(&concrete.layers) {
            let flops = if layer.kind.has_weights() {
                u64::from(layer.kernel_w)
                    * u64::from(layer.kernel_h)
                    * u64::from(c.in_channels / c.groups)
                    * u64::from(c.out_channels)
                    * u64::from(c.spatial_out_w)
                    * u64::from(c.spatial_out_h)
            } else {
                0
            };
            let weights = if layer.kind.has_weights() {
                u64::from(layer.kernel_w)
                    * u64::from(layer.kernel_h)
                    * u64::from(c.in_channels / c.groups)
                    * u64::from(c.out_channels)
            } else {
                0
            };
            let fm_in: u64 = if layer.input_sources.is_empty() {
                u64::from(c.spatial_in_w) * u64::from(c.spatial_in_h) * u64::from(c.in_channels)
            } else {
                layer
                    .input_sources
                    .iter()
                    .map(|&src| {
                        let s = &concrete.layers[src];
                        u64::from(s.spatial_out_w)
                            * u64::from(s.spatial_out_h)
                            * u64::from(s.out_channels)
                    })
                    .sum()
            };
            let fm_out =
                u64::from(c.spatial_out_w) * u64::from(c.spatial_out_h) * u64::from(c.out_channels);
            let skip = u64::from(c.spatial_out_w)
                * u64::from(c.spatial_out_h)
                * live_skip_channels[layer.id];
            let memory = fm_in + fm_out + weights + skip;

            total_flops += flops;
            peak_memory = peak_memory.max(memory);
            per_layer.push(LayerCost {
                layer: layer.id,
                flops,
                memory_elements: memory,
            });
        }
        Ok(CostReport {
            flops: total_flops,
            memory_elements: peak_memory,
            per_layer,
        })
    }

    /// Serializes the spec to a pretty JSON document (schema in
    /// `docs/arch-schema.md`).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialization cannot fail")
    }

    /// Parses and validates a JSON spec, recomputing spatial sizes and
    /// rejecting documents that disagree with them.
    pub fn from_json(text: &str) -> Result<ArchSpec, ArchError> {
        let spec: ArchSpec = serde_json::from_str(text)?;
        let mut layers = spec.layers.clone();
        resolve_spatial(&spec.name, &mut layers, spec.input_resolution)?;
        for (declared, resolved) in spec.layers.iter().zip(&layers) {
            if (declared.spatial_out_w, declared.spatial_out_h)
                != (resolved.spatial_out_w, resolved.spatial_out_h)
            {
                return Err(ArchError::InvalidSpec {
                    name: spec.name.clone(),
                    reason: format!(
                        "layer {} declares spatial {}x{}, resolution implies {}x{}",
                        declared.id,
                        declared.spatial_out_w,
                        declared.spatial_out_h,
                        resolved.spatial_out_w,
                        resolved.spatial_out_h
                    ),
                });
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn resolve_groups(layer: &LayerSpec, in_ch: u32, out_ch: u32) -> Result<u32, ArchError> {
    if layer.groups == 1 {
        return Ok(1);
    }
    // Depthwise: base groups equal base channels, so the resolved group count
    // follows the resolved channels.
    if layer.groups == layer.in_channels_base && layer.groups == layer.out_channels_base {
        if in_ch != out_ch {
            return Err(ArchError::GroupsIndivisible {
                layer: layer.id,
                groups: in_ch,
                channels: out_ch,
            });
        }
        return Ok(in_ch);
    }
    if in_ch % layer.groups != 0 || out_ch % layer.groups != 0 {
        return Err(ArchError::GroupsIndivisible {
            layer: layer.id,
            groups: layer.groups,
            channels: if in_ch % layer.groups != 0 {
                in_ch
            } else {
                out_ch
            },
        });
    }
    Ok(layer.groups)
}

/// Fills `spatial_out_*` by propagating the input resolution through the
/// graph. Convolutions use same-padding semantics: `out = ceil(in / stride)`.
fn resolve_spatial(
    name: &str,
    layers: &mut [LayerSpec],
    input_resolution: (u32, u32, u32),
) -> Result<(), ArchError> {
    let invalid = |reason: String| ArchError::InvalidSpec {
        name: name.to_string(),
        reason,
    };
    let (in_w, in_h, _) = input_resolution;
    let mut spatial: Vec<(u32, u32)> = Vec::with_capacity(layers.len());
    for (pos, layer) in layers.iter_mut().enumerate() {
        let (sw, sh) = match layer.input_sources.first() {
            None => (in_w, in_h),
            Some(&src) if src < pos => spatial[src],
            Some(&src) => {
                return Err(invalid(format!("layer {pos} consumes later layer {src}")));
            }
        };
        let out = match layer.kind {
            LayerKind::Conv => {
                if layer.stride == 0 {
                    return Err(invalid(format!("layer {pos} has stride 0")));
                }
                (sw.div_ceil(layer.stride), sh.div_ceil(layer.stride))
            }
            LayerKind::Dense | LayerKind::ClassifierDense => {
                if (sw, sh) != (1, 1) {
                    return Err(invalid(format!(
                        "dense layer {pos} requires 1x1 spatial input, got {sw}x{sh}"
                    )));
                }
                (1, 1)
            }
            LayerKind::GlobalPool => (1, 1),
            LayerKind::Add => (sw, sh),
        };
        layer.spatial_out_w = out.0;
        layer.spatial_out_h = out.1;
        spatial.push(out);
    }
    Ok(())
}

mod builtin;
pub use builtin::builtin_specs;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// conv 3x3, 4 -> 8 channels on an 8x8 input; used by the hand-counted
    /// cost examples.
    fn single_conv() -> ArchSpec {
        let conv = LayerSpec {
            id: 0,
            kind: LayerKind::Conv,
            kernel_w: 3,
            kernel_h: 3,
            stride: 1,
            groups: 1,
            in_channels_base: 4,
            out_channels_base: 8,
            input_sources: vec![],
            spatial_out_w: 0,
            spatial_out_h: 0,
        };
        ArchSpec::new("one-conv", vec![conv], vec![vec![0]], (8, 8, 4), 0.1).unwrap()
    }

    fn random_width(spec: &ArchSpec, rng: &mut impl Rng) -> WidthConfig {
        WidthConfig(
            (0..spec.width_dims())
                .map(|_| rng.random_range(spec.w0..=1.0))
                .collect(),
        )
    }

    #[test]
    fn all_ones_keeps_base_channels() {
        for name in ["tiny-mlp", "tiny-resnet", "mobilenetv2-cost"] {
            let spec = builtin_specs(name).unwrap();
            let concrete = spec.resolve_channels(&spec.full_width()).unwrap();
            for (layer, c) in spec.layers.iter().zip(&concrete.layers) {
                if layer.kind.is_width_controllable() {
                    assert_eq!(c.out_channels, layer.out_channels_base, "{name}/{}", layer.id);
                }
            }
        }
    }

    #[test]
    fn channel_rounding_truncates_with_floor_one() {
        assert_eq!(scale_channels(0.42, 64), 26); // floor(26.88)
        assert_eq!(scale_channels(0.316, 16), 5); // floor(5.056)
        assert_eq!(scale_channels(0.01, 3), 1);
        assert_eq!(scale_channels(1.0, 64), 64);
    }

    #[test]
    fn dense_layer_flops_hand_count() {
        let dense = LayerSpec {
            id: 0,
            kind: LayerKind::Dense,
            kernel_w: 1,
            kernel_h: 1,
            stride: 1,
            groups: 1,
            in_channels_base: 10,
            out_channels_base: 20,
            input_sources: vec![],
            spatial_out_w: 0,
            spatial_out_h: 0,
        };
        let spec = ArchSpec::new("one-dense", vec![dense], vec![vec![0]], (1, 1, 10), 0.1).unwrap();
        assert_eq!(spec.count_flops(&spec.full_width()).unwrap(), 200);
    }

    #[test]
    fn conv_flops_hand_count() {
        let spec = single_conv();
        // 3*3*4*8*8*8
        assert_eq!(spec.count_flops(&spec.full_width()).unwrap(), 18_432);
    }

    #[test]
    fn conv_memory_hand_count() {
        let spec = single_conv();
        // FM_in 8*8*4 + FM_out 8*8*8 + weights 3*3*4*8, no skip
        assert_eq!(
            spec.count_memory(&spec.full_width()).unwrap(),
            256 + 512 + 288
        );
    }

    #[test]
    fn memory_positive_at_any_valid_width() {
        for name in ["tiny-mlp", "tiny-resnet"] {
            let spec = builtin_specs(name).unwrap();
            assert!(spec.count_memory(&spec.min_width()).unwrap() > 0);
        }
    }

    #[test]
    fn memory_matches_per_layer_maximum() {
        let mut rng = stream(11, "mem-oracle", 0);
        for name in ["tiny-mlp", "tiny-resnet", "mobilenetv2-cost"] {
            let spec = builtin_specs(name).unwrap();
            for _ in 0..100 {
                let width = random_width(&spec, &mut rng);
                let report = spec.cost_report(&width).unwrap();
                let brute = report
                    .per_layer
                    .iter()
                    .map(|l| l.memory_elements)
                    .max()
                    .unwrap();
                assert_eq!(report.memory_elements, brute, "{name}");
            }
        }
    }

    #[test]
    fn two_layer_memory_dominated_by_larger_layer() {
        let layers = vec![
            LayerSpec {
                id: 0,
                kind: LayerKind::Conv,
                kernel_w: 1,
                kernel_h: 1,
                stride: 1,
                groups: 1,
                in_channels_base: 2,
                out_channels_base: 4,
                input_sources: vec![],
                spatial_out_w: 0,
                spatial_out_h: 0,
            },
            LayerSpec {
                id: 1,
                kind: LayerKind::Conv,
                kernel_w: 3,
                kernel_h: 3,
                stride: 1,
                groups: 1,
                in_channels_base: 4,
                out_channels_base: 32,
                input_sources: vec![0],
                spatial_out_w: 0,
                spatial_out_h: 0,
            },
        ];
        let spec =
            ArchSpec::new("two-conv", layers, vec![vec![0], vec![1]], (4, 4, 2), 0.1).unwrap();
        let report = spec.cost_report(&spec.full_width()).unwrap();
        // layer 1: FM_in 4*4*4 + FM_out 4*4*32 + weights 3*3*4*32
        let layer1 = 64 + 512 + 1152;
        assert_eq!(report.memory_elements, layer1);
        assert_eq!(report.per_layer[1].memory_elements, layer1);
        assert!(report.per_layer[0].memory_elements < layer1);
    }

    #[test]
    fn builtin_dimensions_match_descriptions() {
        let resnet = builtin_specs("tiny-resnet").unwrap();
        assert_eq!(resnet.width_dims(), 6);
        assert!((resnet.w0 - 0.316).abs() < 1e-12);

        let mlp = builtin_specs("tiny-mlp").unwrap();
        assert_eq!(mlp.width_dims(), 3);
        assert!((mlp.w0 - 0.25).abs() < 1e-12);

        let mbv2 = builtin_specs("mobilenetv2-cost").unwrap();
        assert_eq!(mbv2.width_dims(), 25);
        assert!((mbv2.w0 - 0.42).abs() < 1e-12);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            builtin_specs("resnet50"),
            Err(ArchError::UnknownArch(_))
        ));
    }

    #[test]
    fn mobilenetv2_flops_reproduce_reference_points() {
        let spec = builtin_specs("mobilenetv2-cost").unwrap();
        let full = spec.count_flops(&spec.full_width()).unwrap() as f64;
        assert!(
            (full - 300e6).abs() <= 0.05 * 300e6,
            "full-width MACs {full:.3e} outside 300M +/- 5%"
        );
        let slim = spec.count_flops(&spec.uniform_width(0.42)).unwrap() as f64;
        assert!(
            (slim - 59e6).abs() <= 0.05 * 59e6,
            "0.42x MACs {slim:.3e} outside 59M +/- 5%"
        );
    }

    #[test]
    fn costs_monotone_in_every_component() {
        let mut rng = stream(3, "monotone", 0);
        for name in ["tiny-mlp", "tiny-resnet", "mobilenetv2-cost"] {
            let spec = builtin_specs(name).unwrap();
            let pairs = if name == "mobilenetv2-cost" { 100 } else { 1000 };
            for _ in 0..pairs {
                let lo = random_width(&spec, &mut rng);
                let hi = WidthConfig(
                    lo.as_slice()
                        .iter()
                        .map(|&a| rng.random_range(a..=1.0))
                        .collect(),
                );
                let lo_report = spec.cost_report(&lo).unwrap();
                let hi_report = spec.cost_report(&hi).unwrap();
                assert!(lo_report.flops <= hi_report.flops, "{name}");
                assert!(lo_report.memory_elements <= hi_report.memory_elements, "{name}");
            }
        }
    }

    #[test]
    fn perturbing_one_multiplier_touches_only_its_tie_group() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let base = spec.resolve_channels(&spec.uniform_width(0.7)).unwrap();
        for g in 0..spec.width_dims() {
            let mut width = spec.uniform_width(0.7);
            width.0[g] = 0.9;
            let bumped = spec.resolve_channels(&width).unwrap();
            for layer in &spec.layers {
                if !layer.kind.is_width_controllable() {
                    continue;
                }
                let in_group = spec.tie_groups[g].contains(&layer.id);
                let changed = bumped.layers[layer.id].out_channels
                    != base.layers[layer.id].out_channels;
                assert_eq!(in_group, changed, "group {g} layer {}", layer.id);
            }
        }
    }

    #[test]
    fn cost_reports_are_deterministic() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let width = spec.uniform_width(0.5);
        assert_eq!(spec.cost_report(&width).unwrap(), spec.cost_report(&width).unwrap());
    }

    #[test]
    fn width_validation_errors() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        assert!(matches!(
            spec.resolve_channels(&WidthConfig(vec![1.0; 4])),
            Err(ArchError::DimensionMismatch { .. })
        ));
        let mut low = spec.full_width();
        low.0[2] = 0.1;
        assert!(matches!(
            spec.resolve_channels(&low),
            Err(ArchError::WidthOutOfBounds { index: 2, .. })
        ));
    }

    #[test]
    fn json_round_trip_preserves_costs() {
        for name in ["tiny-mlp", "tiny-resnet", "mobilenetv2-cost"] {
            let spec = builtin_specs(name).unwrap();
            let parsed = ArchSpec::from_json(&spec.to_json()).unwrap();
            let width = spec.uniform_width((spec.w0 + 1.0) / 2.0);
            assert_eq!(
                spec.cost_report(&width).unwrap(),
                parsed.cost_report(&width).unwrap()
            );
        }
    }

    #[test]
    fn json_with_wrong_spatial_dims_is_rejected() {
        let spec = single_conv();
        let tampered = spec.to_json().replace("\"spatial_out_w\": 8", "\"spatial_out_w\": 4");
        assert!(ArchSpec::from_json(&tampered).is_err());
    }
}
