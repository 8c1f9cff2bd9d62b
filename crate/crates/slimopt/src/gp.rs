//! Gaussian-process regression over the unit box with a confidence-bound
//! acquisition.
//!
//! One model per objective: inputs are width vectors normalized to
//! `[0,1]^d`, targets are standardized internally. The kernel is Matérn
//! ν = 5/2 with per-dimension lengthscales; the posterior is computed through
//! a Cholesky factor of `K + σ_n² I` with a jitter ladder on failure.
//! All math is in `f64`.

use rand::Rng;
use thiserror::Error;

use crate::rng::stream;

#[derive(Debug, Error)]
pub enum GpError {
    #[error("gp fit needs at least one observation")]
    Empty,
    #[error("input row {row} has {got} dims, expected {expected}")]
    RaggedInput {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("input row {row} component {dim} = {value} outside [0, 1]")]
    InputOutOfBox { row: usize, dim: usize, value: f64 },
    #[error("non-finite response at index {0}")]
    NonFiniteResponse(usize),
    #[error("Cholesky factorization failed at maximum jitter {max_jitter:e}; inputs are degenerate duplicates")]
    CholeskyFailed { max_jitter: f64 },
}

/// Kernel and noise hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GpHyperparams {
    /// Per-dimension Matérn lengthscales.
    pub lengthscales: Vec<f64>,
    /// Signal variance σ² (kernel value at distance zero).
    pub signal_variance: f64,
    /// Observation noise variance σ_n².
    pub noise_variance: f64,
}

impl GpHyperparams {
    /// Fixed defaults: ℓ = 0.5 per dimension, σ² = 1, σ_n² = 1e-6.
    pub fn defaults(dims: usize) -> Self {
        GpHyperparams {
            lengthscales: vec![0.5; dims],
            signal_variance: 1.0,
            noise_variance: 1e-6,
        }
    }
}

/// Exploration coefficient for the confidence bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcbConfig {
    pub beta: f64,
}

impl Default for UcbConfig {
    /// β = 0.1.
    fn default() -> Self {
        UcbConfig { beta: 0.1 }
    }
}

/// A fitted, immutable GP posterior.
#[derive(Debug, Clone)]
pub struct GpModel {
    train_inputs: Vec<Vec<f64>>,
    hyper: GpHyperparams,
    /// Standardization of the raw targets.
    y_mean: f64,
    y_scale: f64,
    /// Lower-triangular Cholesky factor of K + σ_n² I (row-major n×n).
    cholesky: Vec<f64>,
    /// (K + σ_n² I)^{-1} z for standardized targets z.
    alpha: Vec<f64>,
    /// Log marginal likelihood of the standardized targets.
    log_marginal: f64,
}

/// Matérn ν = 5/2 with anisotropic lengthscales.
pub fn matern52(a: &[f64], b: &[f64], hyper: &GpHyperparams) -> f64 {
    let mut r2 = 0.0;
    for ((&x, &y), &ls) in a.iter().zip(b).zip(&hyper.lengthscales) {
        let d = (x - y) / ls;
        r2 += d * d;
    }
    let r = r2.sqrt();
    let s = 5.0_f64.sqrt() * r;
    hyper.signal_variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Fits a GP to `inputs` (rows in `[0,1]^d`) and `targets`.
///
/// With `hyper_opt`, lengthscales and variances are chosen by seeded
/// multi-start coordinate search over a log-space grid, maximizing the log
/// marginal likelihood; otherwise the fixed defaults are used.
pub fn fit(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyper_opt: bool,
    seed: u64,
) -> Result<GpModel, GpError> {
    let n = inputs.len();
    if n == 0 || targets.len() != n {
        return Err(GpError::Empty);
    }
    let dims = inputs[0].len();
    for (row, x) in inputs.iter().enumerate() {
        if x.len() != dims {
            return Err(GpError::RaggedInput {
                row,
                got: x.len(),
                expected: dims,
            });
        }
        for (dim, &value) in x.iter().enumerate() {
            if !(-1e-9..=1.0 + 1e-9).contains(&value) {
                return Err(GpError::InputOutOfBox { row, dim, value });
            }
        }
    }
    for (i, &y) in targets.iter().enumerate() {
        if !y.is_finite() {
            return Err(GpError::NonFiniteResponse(i));
        }
    }

    let hyper = if hyper_opt {
        optimize_hyperparams(inputs, targets, dims, seed)?
    } else {
        GpHyperparams::defaults(dims)
    };
    fit_with(inputs, targets, hyper)
}

/// Fits with explicit hyperparameters (no search).
pub fn fit_with(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyper: GpHyperparams,
) -> Result<GpModel, GpError> {
    let (y_mean, y_scale) = standardization(targets);
    let z: Vec<f64> = targets.iter().map(|&y| (y - y_mean) / y_scale).collect();
    let (cholesky, alpha, log_marginal) = factorize(inputs, &z, &hyper)?;
    Ok(GpModel {
        train_inputs: inputs.to_vec(),
        hyper,
        y_mean,
        y_scale,
        cholesky,
        alpha,
        log_marginal,
    })
}

impl GpModel {
    pub fn hyperparams(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    pub fn train_len(&self) -> usize {
        self.train_inputs.len()
    }

    /// Scale of the internal target standardization; divides raw variances
    /// (squared) back into standardized units.
    pub fn target_scale(&self) -> f64 {
        self.y_scale
    }

    /// Posterior mean and variance at `x`, in the raw target units.
    /// Variance is clamped at zero.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.train_inputs.len();
        let mut k_star = vec![0.0; n];
        for (ks, xi) in k_star.iter_mut().zip(&self.train_inputs) {
            *ks = matern52(x, xi, &self.hyper);
        }
        let mean_z: f64 = k_star.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();

        // v = L^{-1} k*; var = k(x,x) - v.v
        let mut v = k_star;
        solve_lower_in_place(&self.cholesky, n, &mut v);
        let explained: f64 = v.iter().map(|e| e * e).sum();
        let var_z = (self.hyper.signal_variance - explained).max(0.0);

        (
            mean_z * self.y_scale + self.y_mean,
            var_z * self.y_scale * self.y_scale,
        )
    }

    /// Lower confidence bound `mean - sqrt(beta) * stddev`; the optimistic
    /// bound under minimization.
    pub fn acquisition_lcb(&self, x: &[f64], beta: f64) -> f64 {
        debug_assert!(beta >= 0.0);
        let (mean, var) = self.predict(x);
        mean - beta.sqrt() * var.sqrt()
    }

    /// Max relative reconstruction error of `L Lᵀ` against `K + σ_n² I`,
    /// exposed for verification.
    pub fn factor_residual(&self) -> f64 {
        let n = self.train_inputs.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..=i {
                let mut k = matern52(&self.train_inputs[i], &self.train_inputs[j], &self.hyper);
                if i == j {
                    k += self.hyper.noise_variance;
                }
                let mut recon = 0.0;
                for t in 0..=j {
                    recon += self.cholesky[i * n + t] * self.cholesky[j * n + t];
                }
                worst = worst.max((recon - k).abs() / k.abs().max(1.0));
            }
        }
        worst
    }
}

fn standardization(targets: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / n;
    let var = targets.iter().map(|&y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let scale = var.sqrt();
    (mean, if scale > 1e-12 { scale } else { 1.0 })
}

/// Builds K + σ_n² I, factorizes with the jitter ladder, and solves for
/// alpha. Returns (L, alpha, log marginal likelihood).
fn factorize(
    inputs: &[Vec<f64>],
    z: &[f64],
    hyper: &GpHyperparams,
) -> Result<(Vec<f64>, Vec<f64>, f64), GpError> {
    let n = inputs.len();
    let mut kernel = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let k = matern52(&inputs[i], &inputs[j], hyper);
            kernel[i * n + j] = k;
            kernel[j * n + i] = k;
        }
    }

    // jitter ladder: bare noise first, then 1e-6 .. 1e-3
    let mut factor = None;
    for jitter in [0.0, 1e-6, 1e-5, 1e-4, 1e-3] {
        let mut attempt = kernel.clone();
        for i in 0..n {
            attempt[i * n + i] += hyper.noise_variance + jitter;
        }
        if cholesky_in_place(&mut attempt, n) {
            factor = Some(attempt);
            break;
        }
    }
    let chol = factor.ok_or(GpError::CholeskyFailed { max_jitter: 1e-3 })?;

    // alpha = L^{-T} (L^{-1} z)
    let mut alpha = z.to_vec();
    solve_lower_in_place(&chol, n, &mut alpha);
    let mut log_det = 0.0;
    for i in 0..n {
        log_det += chol[i * n + i].ln();
    }
    // lml uses alpha in the half-solved form: z^T (K+σI)^{-1} z = |L^{-1}z|^2
    let quad: f64 = alpha.iter().map(|a| a * a).sum();
    solve_upper_transpose_in_place(&chol, n, &mut alpha);
    let lml = -0.5 * quad - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    Ok((chol, alpha, lml))
}

/// In-place lower Cholesky of a symmetric matrix (row-major). Returns false
/// if a pivot is not strictly positive.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for t in 0..j {
                sum -= a[i * n + t] * a[j * n + t];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return false;
                }
                a[i * n + i] = sum.sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
        for j in (i + 1)..n {
            a[i * n + j] = 0.0;
        }
    }
    true
}

/// Solves L x = b in place for lower-triangular L.
fn solve_lower_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut sum = b[i];
        for t in 0..i {
            sum -= l[i * n + t] * b[t];
        }
        b[i] = sum / l[i * n + i];
    }
}

/// Solves Lᵀ x = b in place for lower-triangular L.
fn solve_upper_transpose_in_place(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut sum = b[i];
        for t in (i + 1)..n {
            sum -= l[t * n + i] * b[t];
        }
        b[i] = sum / l[i * n + i];
    }
}

/// Coordinate search over a log-space grid (9 points per parameter, 4
/// seeded restarts), maximizing the log marginal likelihood.
fn optimize_hyperparams(
    inputs: &[Vec<f64>],
    targets: &[f64],
    dims: usize,
    seed: u64,
) -> Result<GpHyperparams, GpError> {
    const GRID: usize = 9;
    const RESTARTS: usize = 4;
    const MAX_SWEEPS: usize = 6;

    let log_grid = |lo: f64, hi: f64| -> Vec<f64> {
        (0..GRID)
            .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (GRID - 1) as f64).exp())
            .collect()
    };
    // grids: one per lengthscale, then signal variance, then noise variance
    let ls_grid = log_grid(0.05, 5.0);
    let sv_grid = log_grid(0.05, 20.0);
    let nv_grid = log_grid(1e-7, 1e-1);
    let n_params = dims + 2;

    let (y_mean, y_scale) = standardization(targets);
    let z: Vec<f64> = targets.iter().map(|&y| (y - y_mean) / y_scale).collect();
    let score = |idx: &[usize]| -> f64 {
        let hyper = GpHyperparams {
            lengthscales: idx[..dims].iter().map(|&i| ls_grid[i]).collect(),
            signal_variance: sv_grid[idx[dims]],
            noise_variance: nv_grid[idx[dims + 1]],
        };
        match factorize(inputs, &z, &hyper) {
            Ok((_, _, lml)) => lml,
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let mut rng = stream(seed, "gp-hyper", 0);
    let mut best_idx: Option<(f64, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        // first restart starts from the middle of every grid
        let mut idx: Vec<usize> = if restart == 0 {
            vec![GRID / 2; n_params]
        } else {
            (0..n_params).map(|_| rng.random_range(0..GRID)).collect()
        };
        let mut current = score(&idx);
        for _ in 0..MAX_SWEEPS {
            let mut improved = false;
            for p in 0..n_params {
                let original = idx[p];
                let mut local_best = (current, original);
                for candidate in 0..GRID {
                    if candidate == original {
                        continue;
                    }
                    idx[p] = candidate;
                    let value = score(&idx);
                    if value > local_best.0 {
                        local_best = (value, candidate);
                    }
                }
                idx[p] = local_best.1;
                if local_best.0 > current {
                    current = local_best.0;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
        if best_idx.as_ref().is_none_or(|(b, _)| current > *b) {
            best_idx = Some((current, idx));
        }
    }

    let (best_score, idx) = best_idx.expect("at least one restart ran");
    if best_score == f64::NEG_INFINITY {
        return Err(GpError::CholeskyFailed { max_jitter: 1e-3 });
    }
    Ok(GpHyperparams {
        lengthscales: idx[..dims].iter().map(|&i| ls_grid[i]).collect(),
        signal_variance: sv_grid[idx[dims]],
        noise_variance: nv_grid[idx[dims + 1]],
    })
}
