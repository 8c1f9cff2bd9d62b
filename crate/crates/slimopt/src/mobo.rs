//! Multi-objective Bayesian optimization over width configurations.
//!
//! Two GP surrogates (cross-entropy and cost) are collapsed into one
//! objective by a weighted sum with weight `lambda` on the normalized cost.
//! `mobo_rs_sample` draws `lambda` uniformly; `mobo_ts2_sample` instead
//! draws a *target cost* uniformly between the smallest and the full model
//! and binary-searches `lambda` until the acquisition minimizer's true cost
//! lands within a relative tolerance of the target, which spreads the
//! visited widths evenly along the cost axis.

use rand::Rng;

use crate::archspec::WidthConfig;
use crate::gp::GpModel;
use crate::rng::{derive_seed, stream};

/// One visited width with its last reevaluated loss and exact cost.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub width: WidthConfig,
    pub ce: f64,
    pub cost: f64,
    pub iteration_added: usize,
}

/// History CSV: `iteration,a_1..a_d,ce,cost`, one row per entry.
pub fn history_to_csv(entries: &[HistoryEntry]) -> String {
    let dims = entries.first().map_or(0, |e| e.width.dims());
    let mut out = String::from("iteration");
    for d in 1..=dims {
        out.push_str(&format!(",a_{d}"));
    }
    out.push_str(",ce,cost\n");
    for entry in entries {
        out.push_str(&entry.iteration_added.to_string());
        for a in entry.width.as_slice() {
            out.push_str(&format!(",{a}"));
        }
        out.push_str(&format!(",{},{}\n", entry.ce, entry.cost));
    }
    out
}

/// The width box `[w0, 1]^d` and its affine map onto the GP's unit box.
#[derive(Debug, Clone, Copy)]
pub struct WidthBounds {
    pub w0: f64,
    pub dims: usize,
}

impl WidthBounds {
    pub fn normalize(&self, width: &WidthConfig) -> Vec<f64> {
        let span = (1.0 - self.w0).max(1e-12);
        width.as_slice().iter().map(|&a| (a - self.w0) / span).collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> WidthConfig {
        let span = 1.0 - self.w0;
        WidthConfig(
            x.iter()
                .map(|&v| (self.w0 + v.clamp(0.0, 1.0) * span).clamp(self.w0, 1.0))
                .collect(),
        )
    }
}

/// Weighted-sum scalarization of two normalized surrogate values; `lambda`
/// weights the cost term, so larger `lambda` prefers smaller models.
pub fn scalarize(lambda: f64, g_ce_value: f64, g_cost_value: f64) -> f64 {
    lambda * g_cost_value + (1.0 - lambda) * g_ce_value
}

/// The surrogate pair with the normalizers that keep `lambda`'s meaning
/// stable while the loss scale shrinks during training.
pub struct Surrogates<'a> {
    pub g_ce: &'a GpModel,
    pub g_cost: &'a GpModel,
    /// Exploration coefficient of the confidence bound.
    pub beta: f64,
    /// Running min/max of the reevaluated losses in the history.
    pub ce_min: f64,
    pub ce_max: f64,
    /// Cost of the full model; normalizes the cost surrogate.
    pub full_cost: f64,
    pub bounds: WidthBounds,
}

impl Surrogates<'_> {
    /// Scalarized acquisition at a normalized point.
    fn value(&self, lambda: f64, x: &[f64]) -> f64 {
        let ce = self.g_ce.acquisition_lcb(x, self.beta);
        let cost = self.g_cost.acquisition_lcb(x, self.beta);
        let ce_span = (self.ce_max - self.ce_min).max(1e-12);
        scalarize(lambda, (ce - self.ce_min) / ce_span, cost / self.full_cost)
    }
}

/// Minimizes `f` over the unit box: the best of `samples` seeded uniform
/// draws, refined by coordinate descent with the step halving from 0.1 down
/// to 1e-3, spending at most `refine_evals` evaluations.
pub fn minimize_box(
    mut f: impl FnMut(&[f64]) -> f64,
    dims: usize,
    seed: u64,
    samples: usize,
    refine_evals: usize,
) -> Vec<f64> {
    let mut rng = stream(seed, "minimize-box", 0);
    let mut best_x: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..=1.0)).collect();
    let mut best = f(&best_x);
    for _ in 1..samples {
        let x: Vec<f64> = (0..dims).map(|_| rng.random_range(0.0..=1.0)).collect();
        let value = f(&x);
        if value < best {
            best = value;
            best_x = x;
        }
    }

    let mut evals = 0usize;
    let mut step = 0.1;
    while step >= 1e-3 && evals < refine_evals {
        let mut improved = false;
        'sweep: for dim in 0..dims {
            for direction in [1.0, -1.0] {
                let candidate = (best_x[dim] + direction * step).clamp(0.0, 1.0);
                if candidate == best_x[dim] {
                    continue;
                }
                let mut x = best_x.clone();
                x[dim] = candidate;
                let value = f(&x);
                evals += 1;
                if value < best {
                    best = value;
                    best_x = x;
                    improved = true;
                }
                if evals >= refine_evals {
                    break 'sweep;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best_x
}

/// Minimizes the scalarized acquisition and returns the width.
pub fn optimize_acquisition(surrogates: &Surrogates, lambda: f64, seed: u64) -> WidthConfig {
    let x = minimize_box(
        |x| surrogates.value(lambda, x),
        surrogates.bounds.dims,
        seed,
        256,
        200,
    );
    surrogates.bounds.denormalize(&x)
}

/// One probe of the binary search, for logs and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ts2Probe {
    pub lambda: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rel_gap: f64,
}

/// Outcome of one width sample.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    pub width: WidthConfig,
    /// Scalarization weight that produced the returned width.
    pub lambda: f64,
    /// Acquisition optimizations performed (1 for random scalarization).
    pub iterations: usize,
    /// Final relative cost gap to the target; zero-cost samplers report 0.
    pub rel_gap: f64,
    /// The drawn target cost, when cost-targeted.
    pub target_cost: Option<f64>,
    pub probes: Vec<Ts2Probe>,
}

/// Binary search over `lambda` for a width whose true cost hits `target`.
///
/// `solve` maps `(lambda, iteration)` to the acquisition minimizer; `cost`
/// is the exact cost model. Stops when the relative gap is within `epsilon`
/// or after `max_iters` probes, returning the best probe seen either way.
pub fn ts2_binary_search(
    mut solve: impl FnMut(f64, usize) -> WidthConfig,
    cost: impl Fn(&WidthConfig) -> f64,
    target: f64,
    full_cost: f64,
    epsilon: f64,
    max_iters: usize,
) -> SampleOutcome {
    let mut lambda = 0.5;
    let (mut lambda_min, mut lambda_max) = (0.0, 1.0);
    let mut probes = Vec::new();
    let mut best: Option<(WidthConfig, f64, f64)> = None;

    for iteration in 1..=max_iters {
        let width = solve(lambda, iteration);
        let rel_gap = (cost(&width) - target) / full_cost;
        probes.push(Ts2Probe {
            lambda,
            lambda_min,
            lambda_max,
            rel_gap,
        });
        let better = best
            .as_ref()
            .is_none_or(|(_, _, g)| rel_gap.abs() < g.abs());
        if better {
            best = Some((width, lambda, rel_gap));
        }
        if rel_gap.abs() <= epsilon {
            break;
        }
        if rel_gap > 0.0 {
            // too expensive: push the cost weight up
            lambda_min = lambda;
            lambda = (lambda + lambda_max) / 2.0;
        } else {
            lambda_max = lambda;
            lambda = (lambda + lambda_min) / 2.0;
        }
    }

    let iterations = probes.len();
    let (width, lambda, rel_gap) = best.expect("max_iters >= 1");
    SampleOutcome {
        width,
        lambda,
        iterations,
        rel_gap,
        target_cost: Some(target),
        probes,
    }
}

/// Cost-targeted sampling: draws a target uniformly in
/// `[cost(all-w0), cost(all-ones)]`, then binary-searches `lambda`.
///
/// Every probe of one search reuses the same optimizer seed (common random
/// numbers), so the minimizer's cost moves with `lambda` instead of with the
/// sampling noise and the bisection brackets cleanly.
#[allow(clippy::too_many_arguments)]
pub fn mobo_ts2_sample(
    surrogates: &Surrogates,
    cost: impl Fn(&WidthConfig) -> f64,
    low_cost: f64,
    epsilon: f64,
    max_iters: usize,
    seed: u64,
) -> SampleOutcome {
    let mut rng = stream(seed, "ts2-target", 0);
    let target = rng.random_range(low_cost..=surrogates.full_cost);
    let optimizer_seed = derive_seed(seed, "ts2-opt", 0);
    ts2_binary_search(
        |lambda, _| optimize_acquisition(surrogates, lambda, optimizer_seed),
        cost,
        target,
        surrogates.full_cost,
        epsilon,
        max_iters,
    )
}

/// Random scalarization: `lambda ~ U(0, 1)`, one acquisition optimization.
pub fn mobo_rs_sample(surrogates: &Surrogates, seed: u64) -> SampleOutcome {
    let mut rng = stream(seed, "rs-lambda", 0);
    let lambda: f64 = rng.random_range(0.0..1.0);
    let width = optimize_acquisition(surrogates, lambda, derive_seed(seed, "rs-opt", 0));
    SampleOutcome {
        width,
        lambda,
        iterations: 1,
        rel_gap: 0.0,
        target_cost: None,
        probes: Vec::new(),
    }
}

/// Shannon entropy (nats) of the cost histogram over `bins` equal cells of
/// `[low, high]`; higher means more evenly spread samples.
pub fn cost_histogram_entropy(costs: &[f64], low: f64, high: f64, bins: usize) -> f64 {
    assert!(bins >= 1 && high > low);
    let mut counts = vec![0usize; bins];
    for &cost in costs {
        let t = ((cost - low) / (high - low)).clamp(0.0, 1.0);
        let bin = ((t * bins as f64) as usize).min(bins - 1);
        counts[bin] += 1;
    }
    let total = costs.len().max(1) as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}
