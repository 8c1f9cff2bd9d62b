//! Uniform slimmable training: the widths are never optimized, only a
//! single global multiplier drawn fresh each step. Evaluation picks 40
//! uniform-width models spaced evenly on the cost axis by bisecting the
//! multiplier, then non-dominated sorts them like every other method.

use rand::Rng;

use crate::archspec::{ArchSpec, WidthConfig};
use crate::data::Dataset;
use crate::mobo::HistoryEntry;
use crate::nn::{slimmable_train_step, SgdState, SharedWeights};
use crate::rng::{derive_seed, stream};

use super::{
    batch_ce, BatchCursor, DriverError, IterLog, JoslimConfig, Method, RunArtifacts, RunState,
};

/// Evaluation points spread across the cost axis.
const EVAL_POINTS: usize = 40;

pub fn slim_train(
    spec: &ArchSpec,
    dataset: &Dataset,
    config: &JoslimConfig,
) -> Result<RunArtifacts, DriverError> {
    let state = RunState::prepare(spec, dataset, config)?;
    let mut weights = SharedWeights::init(spec, config.seed);
    let mut sgd = SgdState::zeros_like(&weights);
    let mut cursor = BatchCursor::new(
        &state.split,
        config.train.batch_size,
        derive_seed(config.seed, "batches", 0),
    );

    let total_steps = config.total_steps();
    let mut iter_logs = Vec::with_capacity(config.full_iters);
    let mut step = 0usize;
    for iteration in 0..config.full_iters {
        let mut full_loss_sum = 0.0;
        let mut width_loss_sum = 0.0;
        let mut width_loss_count = 0usize;
        let mut last_lr = 0.0;
        for _ in 0..config.steps_per_iter {
            // fresh global multipliers every step, plus the smallest width
            let mut rng = stream(config.seed, "slim-widths", step as u64);
            let mut widths: Vec<WidthConfig> = (0..config.samples_per_iter)
                .map(|_| spec.uniform_width(rng.random_range(spec.w0..=1.0)))
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

    // evaluation set: multipliers whose costs are evenly spaced on the axis
    let batch = cursor.next_batch();
    let mut history = Vec::with_capacity(EVAL_POINTS);
    for j in 0..EVAL_POINTS {
        let target = state.low_cost
            + (state.full_cost - state.low_cost) * j as f64 / (EVAL_POINTS - 1) as f64;
        let width = bisect_uniform_cost(spec, &state, target);
        history.push(HistoryEntry {
            ce: batch_ce(&weights, spec, &width, &batch)?,
            cost: state.cost_of(&width),
            width,
            iteration_added: config.full_iters,
        });
    }

    drop(cursor);
    state.finish(Method::Slim, weights, history, iter_logs, step)
}

/// Smallest uniform multiplier whose cost reaches `target`. Cost is a
/// monotone step function of the multiplier, so plain bisection lands
/// within one channel-rounding step of the target.
fn bisect_uniform_cost(spec: &ArchSpec, state: &RunState, target: f64) -> WidthConfig {
    let (mut lo, mut hi) = (spec.w0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if state.cost_of(&spec.uniform_width(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    spec.uniform_width(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archspec::builtin_specs;
    use crate::archspec::CostObjective;
    use crate::data::synth_spirals;
    use crate::nn::TrainConfig;

    fn tiny_config() -> JoslimConfig {
        JoslimConfig {
            full_iters: 2,
            steps_per_iter: 3,
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
            seed: 5,
        }
    }

    #[test]
    fn slim_candidates_are_uniform_and_evenly_spaced() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let dataset = synth_spirals(3, 60, 0.1, 3).unwrap();
        let artifacts = slim_train(&spec, &dataset, &tiny_config()).unwrap();

        assert_eq!(artifacts.history.len(), EVAL_POINTS);
        for entry in &artifacts.history {
            let first = entry.width.as_slice()[0];
            assert!(entry.width.as_slice().iter().all(|&a| a == first));
        }

        // Bisection places each point on the smallest reachable cost level
        // at or above its target, so consecutive gaps are bounded by the
        // ideal spacing plus the staircase's own largest jump. When channel
        // rounding is fine relative to the spacing this is the 2x-of-ideal
        // bound; the coarse step function of a desk-sized net is the binding
        // term instead.
        let mut costs: Vec<f64> = artifacts.history.iter().map(|e| e.cost).collect();
        costs.sort_by(f64::total_cmp);
        costs.dedup();
        let lo = spec.cost(&spec.min_width(), CostObjective::Flops).unwrap();
        let hi = spec.cost(&spec.full_width(), CostObjective::Flops).unwrap();
        let ideal = (hi - lo) / (EVAL_POINTS - 1) as f64;

        let mut levels: Vec<f64> = (0..=2000)
            .map(|i| {
                let m = spec.w0 + (1.0 - spec.w0) * i as f64 / 2000.0;
                spec.cost(&spec.uniform_width(m), CostObjective::Flops).unwrap()
            })
            .collect();
        levels.dedup();
        let max_step = levels
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(0.0f64, f64::max);

        for pair in costs.windows(2) {
            let gap = pair[1] - pair[0];
            assert!(
                gap <= ideal + max_step + 1e-9,
                "gap {gap} vs ideal {ideal} + step {max_step}"
            );
        }
        // the spacing spans the whole axis
        assert_eq!(*costs.first().unwrap(), lo);
        assert_eq!(*costs.last().unwrap(), hi);

        artifacts.verify(&spec, CostObjective::Flops).unwrap();
    }

    #[test]
    fn slim_runs_the_full_step_budget() {
        let spec = builtin_specs("tiny-resnet").unwrap();
        let dataset = synth_spirals(3, 60, 0.1, 3).unwrap();
        let config = tiny_config();
        let artifacts = slim_train(&spec, &dataset, &config).unwrap();
        assert_eq!(artifacts.steps_done, config.total_steps());
        assert_eq!(artifacts.iter_logs.len(), config.full_iters);
    }
}
