//! Loss, SGD with momentum, the sandwich-rule slimmable step, and metric
//! evaluation.

use crate::archspec::{ArchSpec, WidthConfig};

use super::engine::{run_backward, run_forward};
use super::{class_count, Batch, Gradients, NnError, SgdState, SharedWeights, TrainConfig};

/// What a sub-network regresses toward.
pub enum Target<'a> {
    /// Class indices with label smoothing in `[0, 1)`.
    Hard { labels: &'a [u32], smoothing: f64 },
    /// Detached per-class probabilities (`n * classes`, rows sum to one),
    /// as produced by the full-width pass for inplace distillation.
    Soft { probs: &'a [f32] },
}

/// Mean smoothed cross-entropy of `logits` (`n * classes`) over the batch.
/// Smoothing 0 is the standard cross-entropy.
pub fn ce_loss(logits: &[f32], labels: &[u32], smoothing: f64) -> Result<f64, NnError> {
    let target = Target::Hard { labels, smoothing };
    let (loss, _) = loss_and_probs(logits, labels.len(), &target, false)?;
    Ok(loss)
}

/// Loss plus the gradient in the logits, `(softmax - target) / n`.
fn loss_and_d_logits(
    logits: &[f32],
    n: usize,
    target: &Target,
) -> Result<(f64, Vec<f32>), NnError> {
    let (loss, d) = loss_and_probs(logits, n, target, true)?;
    Ok((loss, d.expect("gradient requested")))
}

/// Softmax cross-entropy in f64 row arithmetic. Optionally produces
/// d_logits; also used by distillation to fetch probabilities.
fn loss_and_probs(
    logits: &[f32],
    n: usize,
    target: &Target,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f32>>), NnError> {
    assert!(n > 0, "loss over an empty batch");
    let classes = logits.len() / n;
    let mut d_logits = if want_grad {
        Some(vec![0.0f32; logits.len()])
    } else {
        None
    };
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0f64;
    for row in 0..n {
        let slice = &logits[row * classes..(row + 1) * classes];
        let mut max = f64::NEG_INFINITY;
        for (class, &v) in slice.iter().enumerate() {
            if !v.is_finite() {
                return Err(NnError::NonFiniteLogits { row, class });
            }
            max = max.max(f64::from(v));
        }
        let mut sum = 0.0f64;
        for &v in slice {
            sum += (f64::from(v) - max).exp();
        }
        let log_sum = sum.ln();

        let target_at = |class: usize| -> f64 {
            match target {
                Target::Hard { labels, smoothing } => {
                    let uniform = smoothing / classes as f64;
                    if labels[row] as usize == class {
                        1.0 - smoothing + uniform
                    } else {
                        uniform
                    }
                }
                Target::Soft { probs } => f64::from(probs[row * classes + class]),
            }
        };

        for (class, &v) in slice.iter().enumerate() {
            let log_p = f64::from(v) - max - log_sum;
            let t = target_at(class);
            total -= t * log_p;
            if let Some(d) = d_logits.as_mut() {
                let p = log_p.exp();
                d[row * classes + class] = ((p - t) * inv_n) as f32;
            }
        }
    }
    Ok((total * inv_n, d_logits))
}

/// Softmax probabilities per row, for distillation targets.
fn softmax_rows(logits: &[f32], n: usize) -> Vec<f32> {
    let classes = logits.len() / n;
    let mut probs = vec![0.0f32; logits.len()];
    for row in 0..n {
        let slice = &logits[row * classes..(row + 1) * classes];
        let max = slice.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0f64;
        for &v in slice {
            sum += f64::from(v - max).exp();
        }
        for (class, &v) in slice.iter().enumerate() {
            probs[row * classes + class] = (f64::from(v - max).exp() / sum) as f32;
        }
    }
    probs
}

/// Loss and parameter gradients of the sub-network at `width` against
/// `target`. Gradients land only in the resolved leading slices.
pub fn loss_and_grad(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
    target: &Target,
    grads: &mut Gradients,
) -> Result<f64, NnError> {
    let trace = run_forward(weights, spec, width, batch)?;
    let (loss, d_logits) = loss_and_d_logits(trace.logits(), batch.len(), target)?;
    run_backward(weights, spec, &trace, batch, d_logits, grads);
    Ok(loss)
}

/// Gradients of the smoothed cross-entropy at one width (fresh accumulator).
pub fn grad(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batch: &Batch,
    smoothing: f64,
) -> Result<Gradients, NnError> {
    let mut grads = Gradients::zeros_like(weights);
    let target = Target::Hard {
        labels: &batch.labels,
        smoothing,
    };
    loss_and_grad(weights, spec, width, batch, &target, &mut grads)?;
    Ok(grads)
}

/// One SGD update: `v = momentum*v + (g + weight_decay*w)`,
/// `w -= lr(step)*v`, with the rate taken from the schedule.
pub fn sgd_step(
    weights: &mut SharedWeights,
    state: &mut SgdState,
    grads: &Gradients,
    config: &TrainConfig,
    step: usize,
    total_steps: usize,
) -> Result<f64, NnError> {
    let lr = config.learning_rate_at(step, total_steps) as f32;
    let momentum = config.momentum as f32;
    let decay = config.weight_decay as f32;
    for ((params, velocity), grad) in weights
        .layers
        .iter_mut()
        .zip(&mut state.velocity)
        .zip(&grads.layers)
    {
        if params.weight.len() != grad.weight.len() || params.bias.len() != grad.bias.len() {
            return Err(NnError::GradientShapeMismatch {
                layer: weights.layers.len(),
            });
        }
        for ((w, v), &g) in params
            .weight
            .iter_mut()
            .zip(&mut velocity.weight)
            .zip(&grad.weight)
        {
            *v = momentum * *v + (g + decay * *w);
            *w -= lr * *v;
        }
        for ((b, v), &g) in params
            .bias
            .iter_mut()
            .zip(&mut velocity.bias)
            .zip(&grad.bias)
        {
            // biases are not decayed
            *v = momentum * *v + g;
            *b -= lr * *v;
        }
    }
    Ok(f64::from(lr))
}

/// Diagnostics from one sandwich step.
#[derive(Debug, Clone)]
pub struct StepStats {
    /// Loss of the full-width pass (hard labels).
    pub full_loss: f64,
    /// Loss of each non-full width, in the order trained.
    pub width_losses: Vec<f64>,
    /// Forward/backward passes executed.
    pub passes: usize,
    pub learning_rate: f64,
}

/// The sandwich rule: train the full network, then every listed width
/// (the caller appends the smallest), averaging gradients over all passes
/// into a single SGD update. With inplace distillation the sub-widths
/// regress to the full pass's detached soft predictions.
pub fn slimmable_train_step(
    weights: &mut SharedWeights,
    state: &mut SgdState,
    spec: &ArchSpec,
    widths: &[WidthConfig],
    batch: &Batch,
    config: &TrainConfig,
    step: usize,
    total_steps: usize,
) -> Result<StepStats, NnError> {
    assert!(!widths.is_empty(), "sandwich needs at least one width");
    let mut grads = Gradients::zeros_like(weights);

    // full-width pass on hard labels
    let full = spec.full_width();
    let trace = run_forward(weights, spec, &full, batch)?;
    let hard = Target::Hard {
        labels: &batch.labels,
        smoothing: config.label_smoothing,
    };
    let (full_loss, d_logits) = loss_and_d_logits(trace.logits(), batch.len(), &hard)?;
    let soft_probs = config
        .inplace_distillation
        .then(|| softmax_rows(trace.logits(), batch.len()));
    run_backward(weights, spec, &trace, batch, d_logits, &mut grads);

    // sampled widths + appended smallest; the full width is deduplicated
    let mut width_losses = Vec::with_capacity(widths.len());
    let mut passes = 1usize;
    for width in widths {
        if width.is_full() {
            continue;
        }
        let target = match &soft_probs {
            Some(probs) => Target::Soft { probs },
            None => Target::Hard {
                labels: &batch.labels,
                smoothing: config.label_smoothing,
            },
        };
        let loss = loss_and_grad(weights, spec, width, batch, &target, &mut grads)?;
        width_losses.push(loss);
        passes += 1;
    }

    grads.scale(1.0 / passes as f32);
    let learning_rate = sgd_step(weights, state, &grads, config, step, total_steps)?;
    Ok(StepStats {
        full_loss,
        width_losses,
        passes,
        learning_rate,
    })
}

/// Full-pass metrics at one width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    /// Mean cross-entropy (no smoothing).
    pub cross_entropy: f64,
    /// Fraction of samples whose argmax logit is wrong; ties resolve to the
    /// lowest class index.
    pub top1_error: f64,
    pub samples: usize,
}

/// Deterministic evaluation over pre-chunked batches: sample-weighted mean
/// cross-entropy and top-1 error, no gradients.
pub fn evaluate(
    weights: &SharedWeights,
    spec: &ArchSpec,
    width: &WidthConfig,
    batches: &[Batch],
) -> Result<EvalMetrics, NnError> {
    let total: usize = batches.iter().map(Batch::len).sum();
    if total == 0 {
        return Err(NnError::EmptyDataset);
    }
    let classes = class_count(spec);
    let mut loss_sum = 0.0f64;
    let mut wrong = 0usize;
    for batch in batches {
        if batch.is_empty() {
            continue;
        }
        let trace = run_forward(weights, spec, width, batch)?;
        let logits = trace.logits();
        let loss = ce_loss(logits, &batch.labels, 0.0)?;
        loss_sum += loss * batch.len() as f64;
        for (row, &label) in batch.labels.iter().enumerate() {
            let slice = &logits[row * classes..(row + 1) * classes];
            let mut best = 0usize;
            for (class, &v) in slice.iter().enumerate() {
                if v > slice[best] {
                    best = class;
                }
            }
            if best != label as usize {
                wrong += 1;
            }
        }
    }
    Ok(EvalMetrics {
        cross_entropy: loss_sum / total as f64,
        top1_error: wrong as f64 / total as f64,
        samples: total,
    })
}
