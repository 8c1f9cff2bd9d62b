//! Held-out trade-off-curve evaluation and the CSV emitters.
//!
//! The curve is built from the run's Pareto set plus the smallest and full
//! widths (both are trained every step, and they pin the curve to the cost
//! bounds). Each width gets full-pass train loss and held-out metrics; the
//! reported AUC is the staircase mean of held-out top-1 error over a uniform
//! cost grid between the smallest and the full model.

use crate::archspec::{ArchSpec, CostObjective, WidthConfig};
use crate::data::{eval_batches, Dataset};
use crate::nn::evaluate;
use crate::pareto::{auc_riemann, staircase, CurveEstimate};

use super::{DriverError, RunArtifacts};

const EVAL_BATCH: usize = 256;

/// One evaluated width on the trade-off curve.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub width: WidthConfig,
    pub cost: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_error: f64,
}

/// The evaluated points (cost ascending) and the grid estimate over
/// held-out error.
#[derive(Debug, Clone)]
pub struct TradeoffCurve {
    pub points: Vec<CurvePoint>,
    pub estimate: CurveEstimate,
}

/// Evaluates the run's Pareto widths (plus the cost-bound anchors) on the
/// train and validation splits and integrates the held-out-error staircase.
pub fn eval_tradeoff_curve(
    artifacts: &RunArtifacts,
    spec: &ArchSpec,
    dataset: &Dataset,
    grid: usize,
    objective: CostObjective,
) -> Result<TradeoffCurve, DriverError> {
    if artifacts.pareto.is_empty() {
        return Err(DriverError::InvalidConfig(
            "run has an empty Pareto set".into(),
        ));
    }
    let widths: Vec<WidthConfig> = artifacts
        .pareto
        .iter()
        .map(|&i| artifacts.history[i].width.clone())
        .collect();
    eval_curve_for_widths(&artifacts.weights, &widths, spec, dataset, grid, objective)
}

/// Curve evaluation for an explicit width list (the Pareto set of a stored
/// run); the smallest and full widths are always added as cost-bound
/// anchors.
pub fn eval_curve_for_widths(
    weights: &crate::nn::SharedWeights,
    pareto_widths: &[WidthConfig],
    spec: &ArchSpec,
    dataset: &Dataset,
    grid: usize,
    objective: CostObjective,
) -> Result<TradeoffCurve, DriverError> {
    let mut unique: Vec<WidthConfig> = vec![spec.min_width(), spec.full_width()];
    for width in pareto_widths {
        if !unique.contains(width) {
            unique.push(width.clone());
        }
    }

    let train_split = dataset.train.fit_to_input(spec.input_resolution)?;
    let val_split = dataset.val.fit_to_input(spec.input_resolution)?;
    let train_batches = eval_batches(&train_split, EVAL_BATCH);
    let val_batches = eval_batches(&val_split, EVAL_BATCH);

    let mut points = Vec::with_capacity(unique.len());
    for width in unique {
        let cost = spec.cost(&width, objective)?;
        let train = evaluate(weights, spec, &width, &train_batches)?;
        let val = evaluate(weights, spec, &width, &val_batches)?;
        points.push(CurvePoint {
            width,
            cost,
            train_loss: train.cross_entropy,
            val_loss: val.cross_entropy,
            val_error: val.top1_error,
        });
    }
    points.sort_by(|a, b| a.cost.total_cmp(&b.cost));

    let support: Vec<(f64, f64)> = points.iter().map(|p| (p.cost, p.val_error)).collect();
    let lower = spec.cost(&spec.min_width(), objective)?;
    let upper = spec.cost(&spec.full_width(), objective)?;
    let estimate = auc_riemann(staircase(&support), lower, upper, grid)?;

    Ok(TradeoffCurve { points, estimate })
}

/// Curve CSV: `cost,train_loss,val_error,a_1..a_d`.
pub fn curve_to_csv(curve: &TradeoffCurve) -> String {
    let dims = curve.points.first().map_or(0, |p| p.width.dims());
    let mut out = String::from("cost,train_loss,val_error");
    for d in 1..=dims {
        out.push_str(&format!(",a_{d}"));
    }
    out.push('\n');
    for point in &curve.points {
        out.push_str(&format!(
            "{},{},{}",
            point.cost, point.train_loss, point.val_error
        ));
        for a in point.width.as_slice() {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}

/// Pareto CSV: `cost,loss,error,a_1..a_d` for the front members under the
/// run's sorting key (reevaluated training loss; error is the train-split
/// top-1 error recorded at sort time).
pub fn pareto_to_csv(artifacts: &RunArtifacts) -> String {
    let dims = artifacts.history.first().map_or(0, |e| e.width.dims());
    let mut out = String::from("cost,loss,error");
    for d in 1..=dims {
        out.push_str(&format!(",a_{d}"));
    }
    out.push('\n');
    for (&i, &error) in artifacts.pareto.iter().zip(&artifacts.pareto_train_errors) {
        let entry = &artifacts.history[i];
        out.push_str(&format!("{},{},{}", entry.cost, entry.ce, error));
        for a in entry.width.as_slice() {
            out.push_str(&format!(",{a}"));
        }
        out.push('\n');
    }
    out
}
