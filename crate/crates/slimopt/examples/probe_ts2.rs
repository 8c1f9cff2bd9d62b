//! scratch probe: dump per-iteration target vs achieved costs
use slimopt::archspec::{builtin_specs, CostObjective};
use slimopt::data::synth_spirals;
use slimopt::drivers::{joslim_train, JoslimConfig, WidthSampler};
use slimopt::nn::{LrSchedule, TrainConfig};
use slimopt::rng::derive_seed;

fn main() {
    let seed = 0u64;
    let spec = builtin_specs("tiny-resnet").unwrap();
    let dataset = synth_spirals(3, 1200, 0.08, derive_seed(seed, "dataset", 0)).unwrap();
    let config = JoslimConfig {
        full_iters: 40,
        steps_per_iter: 50,
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
    let artifacts = joslim_train(&spec, &dataset, &config).unwrap();
    let full = spec.cost(&spec.full_width(), CostObjective::Flops).unwrap();
    println!("iter | target(rel) achieved(rel) gap | target achieved gap");
    for log in &artifacts.iter_logs {
        for (i, w) in log.widths_sampled.iter().enumerate() {
            let width = slimopt::archspec::WidthConfig(w.clone());
            let cost = spec.cost(&width, CostObjective::Flops).unwrap();
            let target = log.target_costs.get(i).copied().unwrap_or(f64::NAN);
            println!(
                "{:3} | t {:.3} a {:.3} gap {:+.3} | lam {:.3}",
                log.iteration,
                target / full,
                cost / full,
                log.rel_gaps.get(i).copied().unwrap_or(f64::NAN),
                log.lambdas[i],
            );
        }
    }
}
