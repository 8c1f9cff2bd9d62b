//! Forward and backward passes over the width-sliced layer graph.
//!
//! The graph is executed layer by layer in topological order; activations
//! are kept per layer for the backward sweep. Convolutions use same-padding
//! (`pad = (k-1)/2`, odd kernels) and dense layers run through the same code
//! path with 1x1 kernels on 1x1 spatial extent. Convolutions and dense
//! layers apply ReLU; the classifier head, adds, and pools do not.

use crate::archspec::{ArchSpec, ConcreteArch, LayerKind, WidthConfig};

use super::{class_count, Batch, Gradients, NnError, SharedWeights};

/// Activations of every layer for one forward pass, kept for backward.
pub(super) struct ForwardTrace {
    pub concrete: ConcreteArch,
    /// Post-activation output of each layer, NCHW.
    pub activations: Vec<Vec<f32>>,
    pub batch_len: usize,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f32] {
        self.activations.last().expect("spec has layers")
    }
}

/// Logits of the sub-network at `width` on `batch`.
pub fn forward(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
) -> Result<Vec<f32>, NnError> {
    let trace = run_forward(weights, spec, width, batch)?;
    Ok(trace.activations.into_iter().last().expect("spec has layers"))
}

pub(super) fn run_forward(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
) -> Result<ForwardTrace, NnError> {
    batch.check_against(spec, class_count(spec))?;
    let concrete = spec.resolve_channels(width)?;
    let n = batch.len();

    let mut activations: Vec<Vec<f32>> = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let c = &concrete.layers[layer.id];
        let out_len = n * c.out_channels as usize * (c.spatial_out_h * c.spatial_out_w) as usize;
        let mut out = vec![0.0f32; out_len];

        let input_of = |src: Option<&usize>| -> &[f32] {
            match src {
                None => &batch.inputs,
                Some(&s) => &activations[s],
            }
        };

        match layer.kind {
            LayerKind::Conv | LayerKind::Dense | LayerKind::ClassifierDense => {
                let input = input_of(layer.input_sources.first());
                conv_forward(
                    input,
                    &mut out,
                    &weights.layers[layer.id].weight,
                    &weights.layers[layer.id].bias,
                    &ConvDims::new(spec, &concrete, layer.id, n),
                    layer.kind != LayerKind::ClassifierDense,
                );
            }
            LayerKind::Add => {
                let a = &activations[layer.input_sources[0]];
                let b = &activations[layer.input_sources[1]];
                for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
                    *o = x + y;
                }
            }
            LayerKind::GlobalPool => {
                let input = input_of(layer.input_sources.first());
                let channels = c.in_channels as usize;
                let area = (c.spatial_in_h * c.spatial_in_w) as usize;
                let scale = 1.0 / area as f32;
                for s in 0..n {
                    for ch in 0..channels {
                        let base = (s * channels + ch) * area;
                        let mut sum = 0.0f32;
                        for p in 0..area {
                            sum += input[base + p];
                        }
                        out[s * channels + ch] = sum * scale;
                    }
                }
            }
        }
        activations.push(out);
    }

    Ok(ForwardTrace {
        concrete,
        activations,
        batch_len: n,
    })
}

/// Backward pass from `d_logits` (gradient of the loss in the logits),
/// accumulating parameter gradients into `grads`. Activation gradients flow
/// through adds and pools; entries outside the resolved slices are never
/// touched.
pub(super) fn run_backward(
    weights: &SharedWeights,
    spec: &ArchSpec,
    trace: &ForwardTrace,
    batch: &Batch,
    d_logits: Vec<f32>,
    grads: &mut Gradients,
) {
    let n = trace.batch_len;
    let concrete = &trace.concrete;
    let mut act_grads: Vec<Option<Vec<f32>>> = vec![None; spec.layers.len()];
    *act_grads.last_mut().expect("spec has layers") = Some(d_logits);

    for layer in spec.layers.iter().rev() {
        let Some(mut d_out) = act_grads[layer.id].take() else {
            continue;
        };
        let c = &concrete.layers[layer.id];

        match layer.kind {
            LayerKind::Conv | LayerKind::Dense | LayerKind::ClassifierDense => {
                // ReLU: out = max(z, 0), so dz = dout where out > 0
                if layer.kind != LayerKind::ClassifierDense {
                    for (g, &a) in d_out.iter_mut().zip(&trace.activations[layer.id]) {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    }
                }
                let src = layer.input_sources.first().copied();
                let input = match src {
                    None => &batch.inputs,
                    Some(s) => &trace.activations[s],
                };
                let dims = ConvDims::new(spec, concrete, layer.id, n);
                let mut d_input = src.map(|s| {
                    take_or_zeros(&mut act_grads[s], trace.activations[s].len())
                });
                let block = &mut grads.layers[layer.id];
                conv_backward(
                    input,
                    &d_out,
                    &weights.layers[layer.id].weight,
                    &mut block.weight,
                    &mut block.bias,
                    d_input.as_deref_mut(),
                    &dims,
                );
                if let (Some(s), Some(buffer)) = (src, d_input) {
                    act_grads[s] = Some(buffer);
                }
            }
            LayerKind::Add => {
                for &s in &layer.input_sources {
                    let mut buffer = take_or_zeros(&mut act_grads[s], d_out.len());
                    for (b, &g) in buffer.iter_mut().zip(&d_out) {
                        *b += g;
                    }
                    act_grads[s] = Some(buffer);
                }
            }
            LayerKind::GlobalPool => {
                let s = layer.input_sources[0];
                let channels = c.in_channels as usize;
                let area = (c.spatial_in_h * c.spatial_in_w) as usize;
                let scale = 1.0 / area as f32;
                let mut buffer = take_or_zeros(&mut act_grads[s], trace.activations[s].len());
                for sample in 0..n {
                    for ch in 0..channels {
                        let g = d_out[sample * channels + ch] * scale;
                        let base = (sample * channels + ch) * area;
                        for p in 0..area {
                            buffer[base + p] += g;
                        }
                    }
                }
                act_grads[s] = Some(buffer);
            }
        }
    }
}

fn take_or_zeros(slot: &mut Option<Vec<f32>>, len: usize) -> Vec<f32> {
    slot.take().unwrap_or_else(|| vec![0.0f32; len])
}

/// Resolved loop bounds and strides for one weighted layer.
struct ConvDims {
    batch: usize,
    in_channels: usize,
    out_channels: usize,
    groups: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    kernel_h: usize,
    kernel_w: usize,
    stride: usize,
    pad_h: isize,
    pad_w: isize,
    /// Weight stride of one output channel at full width.
    in_group_base: usize,
}

impl ConvDims {
    fn new(spec: &ArchSpec, concrete: &ConcreteArch, layer: usize, batch: usize) -> ConvDims {
        let l = &spec.layers[layer];
        let c = &concrete.layers[layer];
        ConvDims {
            batch,
            in_channels: c.in_channels as usize,
            out_channels: c.out_channels as usize,
            groups: c.groups as usize,
            in_h: c.spatial_in_h as usize,
            in_w: c.spatial_in_w as usize,
            out_h: c.spatial_out_h as usize,
            out_w: c.spatial_out_w as usize,
            kernel_h: l.kernel_h as usize,
            kernel_w: l.kernel_w as usize,
            stride: l.stride as usize,
            pad_h: ((l.kernel_h - 1) / 2) as isize,
            pad_w: ((l.kernel_w - 1) / 2) as isize,
            in_group_base: (l.in_channels_base / l.groups) as usize,
        }
    }

    fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    fn weight_index(&self, oc: usize, ic_local: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_group_base + ic_local) * self.kernel_h + ky) * self.kernel_w + kx
    }
}

fn conv_forward(
    input: &[f32],
    output: &mut [f32],
    weight: &[f32],
    bias: &[f32],
    d: &ConvDims,
    relu: bool,
) {
    let in_per_group = d.in_per_group();
    let out_per_group = d.out_per_group();
    let in_area = d.in_h * d.in_w;
    let out_area = d.out_h * d.out_w;
    for s in 0..d.batch {
        let in_base = s * d.in_channels * in_area;
        let out_base = s * d.out_channels * out_area;
        for oc in 0..d.out_channels {
            let group = oc / out_per_group;
            let ic_start = group * in_per_group;
            for oy in 0..d.out_h {
                for ox in 0..d.out_w {
                    let mut acc = bias[oc];
                    for ic_local in 0..in_per_group {
                        let ic = ic_start + ic_local;
                        let channel_base = in_base + ic * in_area;
                        for ky in 0..d.kernel_h {
                            let iy = (oy * d.stride + ky) as isize - d.pad_h;
                            if iy < 0 || iy >= d.in_h as isize {
                                continue;
                            }
                            let row_base = channel_base + iy as usize * d.in_w;
                            for kx in 0..d.kernel_w {
                                let ix = (ox * d.stride + kx) as isize - d.pad_w;
                                if ix < 0 || ix >= d.in_w as isize {
                                    continue;
                                }
                                acc += weight[d.weight_index(oc, ic_local, ky, kx)]
                                    * input[row_base + ix as usize];
                            }
                        }
                    }
                    let value = if relu { acc.max(0.0) } else { acc };
                    output[out_base + oc * out_area + oy * d.out_w + ox] = value;
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and (optionally) the input gradient.
/// `d_output` must already include the ReLU mask.
fn conv_backward(
    input: &[f32],
    d_output: &[f32],
    weight: &[f32],
    d_weight: &mut [f32],
    d_bias: &mut [f32],
    mut d_input: Option<&mut [f32]>,
    d: &ConvDims,
) {
    let in_per_group = d.in_per_group();
    let out_per_group = d.out_per_group();
    let in_area = d.in_h * d.in_w;
    let out_area = d.out_h * d.out_w;
    for s in 0..d.batch {
        let in_base = s * d.in_channels * in_area;
        let out_base = s * d.out_channels * out_area;
        for oc in 0..d.out_channels {
            let group = oc / out_per_group;
            let ic_start = group * in_per_group;
            for oy in 0..d.out_h {
                for ox in 0..d.out_w {
                    let g = d_output[out_base + oc * out_area + oy * d.out_w + ox];
                    if g == 0.0 {
                        continue;
                    }
                    d_bias[oc] += g;
                    for ic_local in 0..in_per_group {
                        let ic = ic_start + ic_local;
                        let channel_base = in_base + ic * in_area;
                        for ky in 0..d.kernel_h {
                            let iy = (oy * d.stride + ky) as isize - d.pad_h;
                            if iy < 0 || iy >= d.in_h as isize {
                                continue;
                            }
                            let row_base = channel_base + iy as usize * d.in_w;
                            for kx in 0..d.kernel_w {
                                let ix = (ox * d.stride + kx) as isize - d.pad_w;
                                if ix < 0 || ix >= d.in_w as isize {
                                    continue;
                                }
                                let w_idx = d.weight_index(oc, ic_local, ky, kx);
                                let in_idx = row_base + ix as usize;
                                d_weight[w_idx] += g * input[in_idx];
                                if let Some(di) = d_input.as_deref_mut() {
                                    di[in_idx] += g * weight[w_idx];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}
