//! Runs the three training procedures on the desk task (3-class spirals,
//! small residual conv net) under one budget and prints the held-out AUC of
//! each trade-off curve.
//!
//!     cargo run --release --example compare -- [seed] [full_iters] [steps_per_iter]

use slimopt::archspec::{builtin_specs, CostObjective};
use slimopt::data::synth_spirals;
use slimopt::drivers::{eval_tradeoff_curve, train, JoslimConfig, Method, WidthSampler};
use slimopt::nn::{LrSchedule, TrainConfig};
use slimopt::rng::derive_seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).map_or(0, |s| s.parse().expect("seed"));
    let full_iters: usize = args.get(2).map_or(100, |s| s.parse().expect("full_iters"));
    let steps_per_iter: usize = args.get(3).map_or(50, |s| s.parse().expect("steps"));

    let spec = builtin_specs("tiny-resnet").expect("builtin spec");
    let dataset = synth_spirals(3, 1200, 0.08, derive_seed(seed, "dataset", 0)).expect("dataset");
    let config = JoslimConfig {
        full_iters,
        steps_per_iter,
        samples_per_iter: 2,
        w0: 0.316,
        epsilon: 0.02,
        max_search_iters: 10,
        cost_objective: CostObjective::Flops,
        sampler: WidthSampler::Ts2,
        gp_hyper_opt: false,
        train: TrainConfig {
            learning_rate: 0.1,
            lr_schedule: LrSchedule::Cosine,
            momentum: 0.9,
            weight_decay: 1e-4,
            label_smoothing: 0.0,
            batch_size: 32,
            epochs: 1,
            inplace_distillation: true,
            seed,
        },
        seed,
    };

    let low = spec
        .cost(&spec.min_width(), config.cost_objective)
        .expect("cost");
    let full = spec
        .cost(&spec.full_width(), config.cost_objective)
        .expect("cost");

    for (label, method, sampler) in [
        ("joslim", Method::Joslim, WidthSampler::Ts2),
        ("jos-rs", Method::Joslim, WidthSampler::Rs),
        ("slim", Method::Slim, WidthSampler::Ts2),
        ("bignas", Method::Bignas, WidthSampler::Ts2),
    ] {
        let start = std::time::Instant::now();
        let run_config = JoslimConfig { sampler, ..config.clone() };
        let artifacts = train(method, &spec, &dataset, &run_config).expect("run");
        let curve = eval_tradeoff_curve(&artifacts, &spec, &dataset, 64, config.cost_objective)
            .expect("curve");
        let mean_search: f64 = artifacts
            .iter_logs
            .iter()
            .map(|l| l.mean_search_iters)
            .sum::<f64>()
            / artifacts.iter_logs.len().max(1) as f64;
        let costs: Vec<f64> = artifacts.history.iter().map(|e| e.cost).collect();
        let entropy = slimopt::mobo::cost_histogram_entropy(&costs, low, full, 10);
        println!(
            "{label:>6}  auc(val err) {:.4}  front {:>2}  mean-bs {:.2}  H-entropy {:.3}  [{:?}]",
            curve.estimate.auc,
            artifacts.pareto.len(),
            mean_search,
            entropy,
            start.elapsed()
        );
    }
}
