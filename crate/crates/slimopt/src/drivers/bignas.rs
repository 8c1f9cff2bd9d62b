//! Two-stage baseline: stage one trains the shared weights on random
//! layer-wise widths; stage two runs the whole search budget (random
//! scalarization) against the frozen weights. Widths and weights are never
//! optimized jointly, which is exactly the gap the alternating method
//! closes.

use crate::archspec::{ArchSpec, WidthConfig};
use crate::data::Dataset;
use crate::mobo::{mobo_rs_sample, HistoryEntry, WidthBounds};
use crate::nn::{slimmable_train_step, SgdState, SharedWeights};
use crate::rng::{derive_seed, stream};
use rand::Rng;

use super::{
    batch_ce, random_width, reevaluate_history, BatchCursor, DriverError, FittedSurrogates,
    IterLog, JoslimConfig, Method, RunArtifacts, RunState,
};

pub fn bignas_train(
    spec: &ArchSpec,
    dataset: &Dataset,
    config: &JoslimConfig,
) -> Result<RunArtifacts, DriverError> {
    let state = RunState::prepare(spec, dataset, config)?;
    let bounds = WidthBounds {
        w0: spec.w0,
        dims: spec.width_dims(),
    };
    let mut weights = SharedWeights::init(spec, config.seed);
    let mut sgd = SgdState::zeros_like(&weights);
    let mut cursor = BatchCursor::new(
        &state.split,
        config.train.batch_size,
        derive_seed(config.seed, "batches", 0),
    );

    // stage 1: sandwich training with independent random components
    let total_steps = config.total_steps();
    let mut iter_logs = Vec::with_capacity(config.full_iters);
    let mut step = 0usize;
    for iteration in 0..config.full_iters {
        let mut full_loss_sum = 0.0;
        let mut width_loss_sum = 0.0;
        let mut width_loss_count = 0usize;
        let mut last_lr = 0.0;
        for _ in 0..config.steps_per_iter {
            let mut rng = stream(config.seed, "bignas-widths", step as u64);
            let mut widths: Vec<WidthConfig> = (0..config.samples_per_iter)
                .map(|_| {
                    WidthConfig(
                        (0..spec.width_dims())
                            .map(|_| rng.random_range(spec.w0..=1.0))
                            .collect(),
                    )
                })
                .collect();
            widths.push(spec.min_width());

            let batch = cursor.next_batch();
            let stats = slimmable_train_step(
                &mut weights,
                &mut sgd,
                spec,
                &widths,
                &batch,
                &config.train,
                step,
                total_steps,
            )?;
            step += 1;
            full_loss_sum += stats.full_loss;
            width_loss_sum += stats.width_losses.iter().sum::<f64>();
            width_loss_count += stats.width_losses.len();
            last_lr = stats.learning_rate;
        }
        iter_logs.push(IterLog {
            iteration,
            mean_search_iters: 0.0,
            widths_sampled: Vec::new(),
            lambdas: Vec::new(),
            target_costs: Vec::new(),
            rel_gaps: Vec::new(),
            mean_full_loss: full_loss_sum / config.steps_per_iter as f64,
            mean_width_loss: width_loss_sum / width_loss_count.max(1) as f64,
            learning_rate: last_lr,
        });
    }

    // stage 2: the weights are frozen; the same search budget as the joint
    // method builds the history round by round
    let rounds = config.full_iters * config.samples_per_iter;
    let mut history: Vec<HistoryEntry> = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let batch = cursor.next_batch();
        reevaluate_history(&mut history, &weights, spec, &batch)?;
        let (width, lambda, iterations) = if history.is_empty() {
            (random_width(spec, config.seed, u64::MAX), f64::NAN, 0)
        } else {
            let fitted = FittedSurrogates::fit(
                &history,
                bounds,
                config.gp_hyper_opt,
                config.seed,
                (config.full_iters + round) as u64,
            )?;
            let surrogates = fitted.as_surrogates(state.full_cost, bounds);
            let outcome = mobo_rs_sample(&surrogates, derive_seed(config.seed, "bignas-rs", round as u64));
            (outcome.width, outcome.lambda, outcome.iterations)
        };
        history.push(HistoryEntry {
            ce: batch_ce(&weights, spec, &width, &batch)?,
            cost: state.cost_of(&width),
            width,
            iteration_added: round,
        });
        if round % config.samples_per_iter == 0 {
            if let Some(log) = iter_logs.get_mut(round / config.samples_per_iter) {
                log.mean_search_iters = iterations as f64;
                log.lambdas.push(lambda);
            }
        }
    }

    drop(cursor);
    state.finish(Method::Bignas, weights, history, iter_logs, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspec::{builtin_specs, CostObjective};
    use crate::data::synth_spirals;
    use crate::nn::TrainConfig;

    #[test]
    fn stage_two_never_touches_the_weights() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let dataset = synth_spirals(3, 60, 0.1, 8).unwrap();
        let config = JoslimConfig {
            full_iters: 2,
            steps_per_iter: 2,
            samples_per_iter: 2,
            w0: 0.316,
            epsilon: 0.02,
            max_search_iters: 10,
            cost_objective: CostObjective::Flops,
            sampler: Default::default(),
            gp_hyper_opt: false,
            train: TrainConfig {
                batch_size: 8,
                ..TrainConfig::default()
            },
            seed: 21,
        };
        let artifacts = bignas_train(&spec, &dataset, &config).unwrap();

        // search budget matches the joint method's history size
        assert_eq!(
            artifacts.history.len(),
            config.full_iters * config.samples_per_iter
        );
        // stage-1 widths are layer-wise (non-uniform) draws: the sampled
        // history from stage 2 should contain at least one non-uniform width
        let non_uniform = artifacts.history.iter().any(|e| {
            let s = e.width.as_slice();
            s.iter().any(|&a| (a - s[0]).abs() > 1e-9)
        });
        assert!(non_uniform);
        assert_eq!(artifacts.steps_done, config.total_steps());
        artifacts.verify(&spec, CostObjective::Flops).unwrap();

        // changing a stage-2-only setting must leave the weight bytes
        // untouched: the search stage holds the weights immutably
        let mut tuned = config;
        tuned.gp_hyper_opt = true;
        let again = bignas_train(&spec, &dataset, &tuned).unwrap();
        assert_eq!(artifacts.weights.to_bytes(), again.weights.to_bytes());
    }
}
