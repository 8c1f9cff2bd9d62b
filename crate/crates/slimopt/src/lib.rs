//! Joint width and weight optimization for slimmable neural networks.
//!
//! A slimmable network is a single weight-shared model that can run at many
//! widths. This crate trains one while *searching* the layer-wise width
//! configurations, minimizing the area under the loss-vs-cost trade-off
//! curve by alternating between multi-objective Bayesian optimization over
//! widths and sandwich-rule gradient steps on the shared weights. Uniform
//! slimmable training and a two-stage train-then-search baseline are
//! provided for comparison under identical budgets.
//!
//! Module map:
//! - [`archspec`]: architecture graphs, tied width multipliers, FLOPs and
//!   inference-memory cost models
//! - [`nn`]: deterministic CPU training engine with width-sliced shared
//!   weights
//! - [`gp`]: Gaussian-process surrogates with a confidence-bound acquisition
//! - [`mobo`]: scalarized acquisition optimization, including the
//!   cost-targeted binary search over the scalarization weight
//! - [`pareto`]: non-dominated sorting and the Riemann AUC metric
//! - [`data`]: seeded synthetic datasets and an IDX image loader
//! - [`drivers`]: the end-to-end training procedures and curve evaluation

pub mod archspec;
pub mod gp;
pub mod data;
pub mod drivers;
pub mod mobo;
pub mod nn;
pub mod pareto;
pub mod rng;
