//! Shared test oracles, independent of the library's compute paths.
//!
//! The reference network evaluation here is written from scratch in `f64`
//! against the documented weight layout, so finite differences taken through
//! it check the engine's analytic `f32` gradients without sharing any
//! backward code.

use slimopt::archspec::{ArchSpec, LayerKind, WidthConfig};
use slimopt::nn::{Batch, SharedWeights};

/// Weights converted to f64 so perturbations are exact.
pub struct OracleWeights {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl OracleWeights {
    pub fn from_shared(weights: &SharedWeights) -> OracleWeights {
        OracleWeights {
            weight: weights
                .layers
                .iter()
                .map(|l| l.weight.iter().map(|&w| f64::from(w)).collect())
                .collect(),
            bias: weights
                .layers
                .iter()
                .map(|l| l.bias.iter().map(|&b| f64::from(b)).collect())
                .collect(),
        }
    }
}

/// Per-layer outputs of the reference forward pass in f64. Layers below
/// `dirty_from` are copied from `cache` instead of recomputed; pass 0 and an
/// empty cache for a full evaluation.
pub fn oracle_outputs(
    spec: &ArchSpec,
    weights: &OracleWeights,
    width: &WidthConfig,
    batch: &Batch,
    dirty_from: usize,
    cache: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let concrete = spec.resolve_channels(width).expect("resolvable width");
    let n = batch.len();
    let inputs: Vec<f64> = batch.inputs.iter().map(|&x| f64::from(x)).collect();

    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        if layer.id < dirty_from {
            outputs.push(cache[layer.id].clone());
            continue;
        }
        let c = &concrete.layers[layer.id];
        let (in_h, in_w) = (c.spatial_in_h as usize, c.spatial_in_w as usize);
        let (out_h, out_w) = (c.spatial_out_h as usize, c.spatial_out_w as usize);
        let (cin, cout) = (c.in_channels as usize, c.out_channels as usize);
        let source = |idx: usize| -> &[f64] {
            match layer.input_sources.get(idx) {
                None => &inputs,
                Some(&s) => &outputs[s],
            }
        };
        let mut out = vec![0.0f64; n * cout * out_h * out_w];
        match layer.kind {
            LayerKind::Conv | LayerKind::Dense | LayerKind::ClassifierDense => {
                let input = source(0);
                let groups = c.groups as usize;
                let (kh, kw) = (layer.kernel_h as usize, layer.kernel_w as usize);
                let stride = layer.stride as usize;
                let (pad_h, pad_w) = ((kh as isize - 1) / 2, (kw as isize - 1) / 2);
                let in_group = cin / groups;
                let out_group = cout / groups;
                let in_group_base = (layer.in_channels_base / layer.groups) as usize;
                for s in 0..n {
                    for oc in 0..cout {
                        let ic0 = (oc / out_group) * in_group;
                        for oy in 0..out_h {
                            for ox in 0..out_w {
                                let mut acc = weights.bias[layer.id][oc];
                                for dic in 0..in_group {
                                    for ky in 0..kh {
                                        for kx in 0..kw {
                                            let iy = (oy * stride + ky) as isize - pad_h;
                                            let ix = (ox * stride + kx) as isize - pad_w;
                                            if iy < 0
                                                || ix < 0
                                                || iy >= in_h as isize
                                                || ix >= in_w as isize
                                            {
                                                continue;
                                            }
                                            let w = weights.weight[layer.id]
                                                [((oc * in_group_base + dic) * kh + ky) * kw + kx];
                                            let v = input[((s * cin + ic0 + dic) * in_h
                                                + iy as usize)
                                                * in_w
                                                + ix as usize];
                                            acc += w * v;
                                        }
                                    }
                                }
                                if layer.kind != LayerKind::ClassifierDense {
                                    acc = acc.max(0.0);
                                }
                                out[((s * cout + oc) * out_h + oy) * out_w + ox] = acc;
                            }
                        }
                    }
                }
            }
            LayerKind::Add => {
                let a = source(0).to_vec();
                let b = source(1);
                for (o, (&x, &y)) in out.iter_mut().zip(a.iter().zip(b)) {
                    *o = x + y;
                }
            }
            LayerKind::GlobalPool => {
                let input = source(0);
                let area = in_h * in_w;
                for s in 0..n {
                    for ch in 0..cin {
                        let mut sum = 0.0;
                        for p in 0..area {
                            sum += input[(s * cin + ch) * area + p];
                        }
                        out[s * cin + ch] = sum / area as f64;
                    }
                }
            }
        }
        outputs.push(out);
    }
    outputs
}

fn smoothed_ce_from_logits(logits: &[f64], labels: &[u32], smoothing: f64) -> f64 {
    let n = labels.len();
    let classes = logits.len() / n;
    let mut total = 0.0;
    for row in 0..n {
        let slice = &logits[row * classes..(row + 1) * classes];
        let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = slice.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for (class, &v) in slice.iter().enumerate() {
            let t = if labels[row] as usize == class {
                1.0 - smoothing + smoothing / classes as f64
            } else {
                smoothing / classes as f64
            };
            total -= t * (v - max - log_sum);
        }
    }
    total / n as f64
}

#[derive(Clone, Copy)]
pub enum Param {
    Weight(usize),
    Bias(usize),
}

/// Central finite difference of the oracle loss in one parameter of `layer`,
/// reusing the unperturbed activations of everything upstream.
#[allow(clippy::too_many_arguments)]
pub fn central_difference(
    spec: &ArchSpec,
    weights: &mut OracleWeights,
    layer: usize,
    param: Param,
    width: &WidthConfig,
    batch: &Batch,
    smoothing: f64,
    h: f64,
    cache: &[Vec<f64>],
) -> f64 {
    let read = |w: &OracleWeights| match param {
        Param::Weight(i) => w.weight[layer][i],
        Param::Bias(i) => w.bias[layer][i],
    };
    let original = read(weights);
    let write = |w: &mut OracleWeights, v: f64| match param {
        Param::Weight(i) => w.weight[layer][i] = v,
        Param::Bias(i) => w.bias[layer][i] = v,
    };
    let eval = |w: &mut OracleWeights| {
        let outputs = oracle_outputs(spec, w, width, batch, layer, cache);
        smoothed_ce_from_logits(outputs.last().expect("has layers"), &batch.labels, smoothing)
    };
    write(weights, original + h);
    let plus = eval(weights);
    write(weights, original - h);
    let minus = eval(weights);
    write(weights, original);
    (plus - minus) / (2.0 * h)
}

/// Relative error with a unit floor, so near-zero gradients compare
/// absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Checks every parameter of every weighted layer against central finite
/// differences. Starts at h = 1e-3; entries that land on a ReLU kink within
/// the difference window are re-checked at smaller h, where the window
/// vanishes. Parameters outside the resolved slice must have exactly zero
/// analytic gradient and are excluded from differencing (perturbing them
/// provably cannot change the loss). Returns the number checked by
/// differencing and the worst relative error.
pub fn gradcheck(
    spec: &ArchSpec,
    weights: &SharedWeights,
    width: &WidthConfig,
    batch: &Batch,
    smoothing: f64,
    tolerance: f64,
) -> (usize, f64) {
    let grads = slimopt::nn::grad(weights, spec, width, batch, smoothing).expect("grad");
    let concrete = spec.resolve_channels(width).expect("resolvable");
    let mut oracle = OracleWeights::from_shared(weights);
    let cache = oracle_outputs(spec, &oracle, width, batch, 0, &[]);

    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for layer in &spec.layers {
        if !layer.kind.has_weights() {
            continue;
        }
        let c = &concrete.layers[layer.id];
        let in_group_base = (layer.in_channels_base / layer.groups) as usize;
        let in_group = (c.in_channels / c.groups) as usize;
        let k = (layer.kernel_h * layer.kernel_w) as usize;

        let entries = grads.layers[layer.id].weight.len() + grads.layers[layer.id].bias.len();
        for entry in 0..entries {
            let (param, analytic, in_slice) = if entry < grads.layers[layer.id].weight.len() {
                let oc = entry / (in_group_base * k);
                let ic = (entry / k) % in_group_base;
                (
                    Param::Weight(entry),
                    f64::from(grads.layers[layer.id].weight[entry]),
                    oc < c.out_channels as usize && ic < in_group,
                )
            } else {
                let oc = entry - grads.layers[layer.id].weight.len();
                (
                    Param::Bias(oc),
                    f64::from(grads.layers[layer.id].bias[oc]),
                    oc < c.out_channels as usize,
                )
            };

            if !in_slice {
                assert_eq!(
                    analytic, 0.0,
                    "layer {} entry {entry}: gradient outside the slice",
                    layer.id
                );
                continue;
            }

            let mut error = f64::INFINITY;
            for h in [1e-3, 1e-4, 1e-5] {
                let numeric = central_difference(
                    spec, &mut oracle, layer.id, param, width, batch, smoothing, h, &cache,
                );
                error = rel_err(analytic, numeric);
                if error <= tolerance {
                    break;
                }
            }
            assert!(
                error <= tolerance,
                "layer {} entry {entry}: analytic {analytic} rel err {error:.3e}",
                layer.id
            );
            checked += 1;
            worst = worst.max(error);
        }
    }
    (checked, worst)
}
