//! Non-dominated sorting and the area-under-curve metric over a cost grid.
//!
//! Both objectives are minimized throughout: `f1` is a loss or error, `f2`
//! a cost. The AUC of a trade-off curve is the mean of the curve's loss at
//! `N` costs spread uniformly between bounds, which normalizes away the grid
//! step so values are comparable across cost ranges.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("need at least {needed} grid points, got {got}")]
    GridTooSmall { needed: usize, got: usize },
    #[error("cost bounds reversed or degenerate: [{lower}, {upper}]")]
    BadBounds { lower: f64, upper: f64 },
    #[error("no curve point at or below cost {cost}; lower bound sits under the smallest model")]
    BelowSupport { cost: f64 },
}

/// A point in (loss, cost) objective space; `id` refers back to whatever the
/// caller is ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectivePoint {
    pub id: usize,
    /// Loss or error (minimized).
    pub f1: f64,
    /// Cost (minimized).
    pub f2: f64,
}

impl ObjectivePoint {
    /// True iff `self` is no worse in both objectives and strictly better in
    /// at least one.
    pub fn dominates(&self, other: &ObjectivePoint) -> bool {
        self.f1 <= other.f1
            && self.f2 <= other.f2
            && (self.f1 < other.f1 || self.f2 < other.f2)
    }
}

/// Partitions `points` into fronts; rank 0 is the Pareto front. Within a
/// front, points are ordered by cost ascending (ties by loss, then id).
pub fn non_dominated_sort(points: &[ObjectivePoint]) -> Vec<Vec<ObjectivePoint>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    let mut current: Vec<usize> = Vec::new();

    for i in 0..n {
        for j in (i + 1)..n {
            if points[i].dominates(&points[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if points[j].dominates(&points[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
        if domination_count[i] == 0 {
            current.push(i);
        }
    }

    let mut fronts = Vec::new();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        let mut front: Vec<ObjectivePoint> = current.iter().map(|&i| points[i]).collect();
        front.sort_by(|a, b| {
            (a.f2, a.f1, a.id)
                .partial_cmp(&(b.f2, b.f1, b.id))
                .expect("finite objectives")
        });
        fronts.push(front);
        current = next;
    }
    fronts
}

/// A trade-off curve sampled on a uniform cost grid, with its AUC.
#[derive(Debug, Clone)]
pub struct CurveEstimate {
    pub lower: f64,
    pub upper: f64,
    pub grid: usize,
    /// (cost, loss) at each grid point.
    pub samples: Vec<(f64, f64)>,
    /// Mean loss over the grid.
    pub auc: f64,
}

/// Mean of `eval(cost)` at `n` costs spread uniformly over `[lower, upper]`
/// inclusive. The evaluator may fail (e.g. a staircase queried below its
/// support); the first failure aborts.
pub fn auc_riemann(
    mut eval: impl FnMut(f64) -> Result<f64, CurveError>,
    lower: f64,
    upper: f64,
    n: usize,
) -> Result<CurveEstimate, CurveError> {
    if n < 2 {
        return Err(CurveError::GridTooSmall { needed: 2, got: n });
    }
    if !(lower < upper) {
        return Err(CurveError::BadBounds { lower, upper });
    }
    let step = (upper - lower) / (n - 1) as f64;
    let mut samples = Vec::with_capacity(n);
    let mut sum = 0.0;
    for i in 0..n {
        let cost = if i == n - 1 {
            upper
        } else {
            lower + step * i as f64
        };
        let loss = eval(cost)?;
        sum += loss;
        samples.push((cost, loss));
    }
    Ok(CurveEstimate {
        lower,
        upper,
        grid: n,
        samples,
        auc: sum / n as f64,
    })
}

/// Staircase evaluator over curve points: the value at cost `c` is the loss
/// of the point with the largest cost at or below `c` (the best model
/// affordable at that budget along a Pareto front).
pub fn staircase(points: &[(f64, f64)]) -> impl Fn(f64) -> Result<f64, CurveError> + '_ {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite curve points"));
    move |cost| {
        let mut best = None;
        for &(c, loss) in &sorted {
            if c <= cost {
                best = Some(loss);
            } else {
                break;
            }
        }
        best.ok_or(CurveError::BelowSupport { cost })
    }
}
