//! Finite-difference verification of the analytic gradients on both
//! trainable built-in architectures, at the full width and random widths.

mod common;

use rand::Rng;
use slimopt::archspec::{builtin_specs, ArchSpec, WidthConfig};
use slimopt::nn::{class_count, Batch, SharedWeights};
use slimopt::rng::stream;

fn random_batch(spec: &ArchSpec, n: usize, seed: u64) -> Batch {
    let (w, h, c) = spec.input_resolution;
    let per = (w * h * c) as usize;
    let classes = class_count(spec) as u32;
    let mut rng = stream(seed, "gradcheck-batch", 0);
    Batch {
        inputs: (0..n * per).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
        labels: (0..n).map(|_| rng.random_range(0..classes)).collect(),
        shape: spec.input_resolution,
    }
}

fn random_widths(spec: &ArchSpec, count: usize, seed: u64) -> Vec<WidthConfig> {
    let mut rng = stream(seed, "gradcheck-width", 0);
    let mut widths = vec![spec.full_width()];
    while widths.len() < count {
        widths.push(WidthConfig(
            (0..spec.width_dims())
                .map(|_| rng.random_range(spec.w0..=1.0))
                .collect(),
        ));
    }
    widths
}

#[test]
fn tiny_mlp_all_parameters_match_finite_differences() {
    let spec = builtin_specs("tiny-mlp").unwrap();
    let weights = SharedWeights::init(&spec, 101);
    let batch = random_batch(&spec, 2, 11);
    for (i, width) in random_widths(&spec, 5, 12).iter().enumerate() {
        let (checked, worst) = common::gradcheck(&spec, &weights, width, &batch, 0.0, 1e-4);
        assert!(checked > 0, "width {i} checked nothing");
        assert!(worst <= 1e-4);
    }
}

#[test]
fn tiny_resnet_all_parameters_match_finite_differences() {
    let spec = builtin_specs("tiny-resnet").unwrap();
    let weights = SharedWeights::init(&spec, 102);
    let batch = random_batch(&spec, 2, 13);
    for (i, width) in random_widths(&spec, 5, 14).iter().enumerate() {
        // label smoothing exercises the smoothed-loss backward path
        let (checked, worst) = common::gradcheck(&spec, &weights, width, &batch, 0.1, 1e-4);
        assert!(checked > 0, "width {i} checked nothing");
        assert!(worst <= 1e-4);
    }
}
