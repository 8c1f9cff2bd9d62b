//! scratch: half-budget variant matrix for the desk task
use slimopt::archspec::{builtin_specs, CostObjective};
use slimopt::data::synth_spirals;
use slimopt::drivers::{eval_tradeoff_curve, train, JoslimConfig, Method, WidthSampler};
use slimopt::nn::{LrSchedule, TrainConfig};
use slimopt::rng::derive_seed;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args[1].parse().unwrap();
    let variant = args[2].as_str();

    let (n, noise, batch, lr, distill) = match variant {
        "a" => (1200, 0.08, 32, 0.1, true),
        "c" => (3000, 0.06, 32, 0.1, true),
        "d" => (3000, 0.06, 64, 0.15, true),
        "b" => (3000, 0.06, 32, 0.1, false),
        other => panic!("unknown variant {other}"),
    };

    let spec = builtin_specs("tiny-resnet").unwrap();
    let dataset = synth_spirals(3, n, noise, derive_seed(seed, "dataset", 0)).unwrap();
    let config = JoslimConfig {
        full_iters: 50,
        steps_per_iter: 50,
        samples_per_iter: 2,
        w0: 0.316,
        epsilon: 0.02,
        max_search_iters: 10,
        cost_objective: CostObjective::Flops,
        sampler: WidthSampler::Ts2,
        gp_hyper_opt: false,
        train: TrainConfig {
            learning_rate: lr,
            lr_schedule: LrSchedule::Cosine,
            momentum: 0.9,
            weight_decay: 1e-4,
            label_smoothing: 0.0,
            batch_size: batch,
            epochs: 1,
            inplace_distillation: distill,
            seed,
        },
        seed,
    };

    for method in [Method::Joslim, Method::Slim] {
        let artifacts = train(method, &spec, &dataset, &config).expect("run");
        let curve = eval_tradeoff_curve(&artifacts, &spec, &dataset, 64, config.cost_objective)
            .expect("curve");
        println!(
            "variant {variant} seed {seed} {:>6}  auc {:.4}",
            method.name(),
            curve.estimate.auc,
        );
    }
}
