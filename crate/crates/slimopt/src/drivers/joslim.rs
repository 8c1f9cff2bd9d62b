//! Joint width and weight optimization by alternating minimization.
//!
//! Each full iteration: draw a minibatch; reevaluate the loss of every
//! visited width on it; refit both GP surrogates; sample M new widths by
//! cost-targeted (or, for the ablation, random) scalarization; append them
//! to the history; then run K sandwich-rule gradient steps on the sampled
//! widths plus the smallest one. The history is shared across iterations,
//! so the search never restarts.

use crate::data::Dataset;
use crate::mobo::{mobo_rs_sample, mobo_ts2_sample, HistoryEntry, SampleOutcome, WidthBounds};
use crate::nn::{slimmable_train_step, SgdState, SharedWeights};
use crate::rng::derive_seed;

use super::{
    batch_ce, random_width, reevaluate_history, BatchCursor, DriverError, FittedSurrogates,
    IterLog, JoslimConfig, Method, RunArtifacts, RunState, WidthSampler,
};
use crate::archspec::ArchSpec;

pub fn joslim_train(
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

    let mut history: Vec<HistoryEntry> = Vec::with_capacity(config.full_iters * config.samples_per_iter);
    let mut iter_logs = Vec::with_capacity(config.full_iters);
    let total_steps = config.total_steps();
    let mut step = 0usize;

    for iteration in 0..config.full_iters {
        let probe_batch = cursor.next_batch();
        reevaluate_history(&mut history, &weights, spec, &probe_batch)?;

        // sample M widths; the first iteration has no history to model, so
        // it bootstraps with uniform draws from the box
        let mut outcomes: Vec<SampleOutcome> = Vec::with_capacity(config.samples_per_iter);
        if history.is_empty() {
            for m in 0..config.samples_per_iter {
                outcomes.push(SampleOutcome {
                    width: random_width(spec, config.seed, m as u64),
                    lambda: f64::NAN,
                    iterations: 0,
                    rel_gap: 0.0,
                    target_cost: None,
                    probes: Vec::new(),
                });
            }
        } else {
            let fitted = FittedSurrogates::fit(
                &history,
                bounds,
                config.gp_hyper_opt,
                config.seed,
                iteration as u64,
            )?;
            let surrogates = fitted.as_surrogates(state.full_cost, bounds);
            for m in 0..config.samples_per_iter {
                let sample_seed = derive_seed(
                    config.seed,
                    "sample",
                    (iteration * config.samples_per_iter + m) as u64,
                );
                let outcome = match config.sampler {
                    WidthSampler::Ts2 => mobo_ts2_sample(
                        &surrogates,
                        |w| state.cost_of(w),
                        state.low_cost,
                        config.epsilon,
                        config.max_search_iters,
                        sample_seed,
                    ),
                    WidthSampler::Rs => mobo_rs_sample(&surrogates, sample_seed),
                };
                outcomes.push(outcome);
            }
        }

        for outcome in &outcomes {
            history.push(HistoryEntry {
                ce: batch_ce(&weights, spec, &outcome.width, &probe_batch)?,
                cost: state.cost_of(&outcome.width),
                width: outcome.width.clone(),
                iteration_added: iteration,
            });
        }

        // widths trained this iteration: the fresh samples plus the smallest
        let mut widths: Vec<_> = outcomes.iter().map(|o| o.width.clone()).collect();
        widths.push(spec.min_width());

        let mut full_loss_sum = 0.0;
        let mut width_loss_sum = 0.0;
        let mut width_loss_count = 0usize;
        let mut last_lr = 0.0;
        for _ in 0..config.steps_per_iter {
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
            mean_search_iters: outcomes.iter().map(|o| o.iterations as f64).sum::<f64>()
                / outcomes.len() as f64,
            widths_sampled: outcomes
                .iter()
                .map(|o| o.width.as_slice().to_vec())
                .collect(),
            lambdas: outcomes.iter().map(|o| o.lambda).collect(),
            target_costs: outcomes.iter().filter_map(|o| o.target_cost).collect(),
            rel_gaps: outcomes.iter().map(|o| o.rel_gap).collect(),
            mean_full_loss: full_loss_sum / config.steps_per_iter as f64,
            mean_width_loss: width_loss_sum / width_loss_count.max(1) as f64,
            learning_rate: last_lr,
        });
    }

    drop(cursor);
    state.finish(Method::Joslim, weights, history, iter_logs, step)
}
