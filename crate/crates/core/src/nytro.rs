//! NYTRO: gradient descent on the empirical risk restricted to the Nyström
//! subspace, regularized by the number of iterations.
//!
//! With `A = K_nm R` and `R Rᵀ = K_mm^†` the iterates are
//! `β_t = β_{t-1} - (γ/n) Aᵀ(A β_{t-1} - Y)` from `β_0 = 0`, and the
//! prediction coefficients over the centers are `α_t = R β_t`.

use std::time::Instant;

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::filters::power_iteration;
use crate::kernels::KernelSpec;
use crate::nystrom::{pinv_factor, select_rows, NystromModel, PathRecord};
use crate::selection::rmse;

const POWER_STEPS: usize = 50;

/// Iterate `β_t` together with the change of variable it lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NytroState {
    pub beta: Array2<f64>,
    pub t: usize,
    pub gamma: f64,
    pub r: Array2<f64>,
}

impl NytroState {
    pub fn alpha(&self) -> Array2<f64> {
        self.r.dot(&self.beta)
    }
}

/// Gradient-descent driver over a fixed `(K_nm, K_mm, Y)`.
#[derive(Debug, Clone)]
pub struct NytroSolver<'a> {
    a: Array2<f64>,
    y: ArrayView2<'a, f64>,
    state: NytroState,
}

impl<'a> NytroSolver<'a> {
    pub fn new(knm: ArrayView2<f64>, kmm: ArrayView2<f64>, y: ArrayView2<'a, f64>, gamma: f64) -> Result<Self> {
        let (n, m) = knm.dim();
        if kmm.dim() != (m, m) {
            return shape_err(format!("K_nm is {n}x{m} but K_mm is {}x{}", kmm.nrows(), kmm.ncols()));
        }
        if y.nrows() != n {
            return shape_err(format!("Y has {} rows, K_nm has {n}", y.nrows()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return param_err(format!("step size must be positive and finite, got {gamma}"));
        }
        let r = pinv_factor(kmm)?;
        let a = knm.dot(&r);
        let bound = descent_bound(a.view());
        if gamma > bound {
            warn!("nytro step {gamma} exceeds the descent bound n/||K_nm R||^2 = {bound}; the objective may increase");
        }
        let beta = Array2::zeros((r.ncols(), y.ncols()));
        Ok(Self { a, y, state: NytroState { beta, t: 0, gamma, r } })
    }

    pub fn state(&self) -> &NytroState {
        &self.state
    }

    /// `‖A β_t - Y‖²` at the current iterate.
    pub fn objective(&self) -> f64 {
        (&self.a.dot(&self.state.beta) - &self.y).mapv(|v| v * v).sum()
    }

    pub fn step(&mut self) -> &NytroState {
        let n = self.a.nrows() as f64;
        let residual = &self.a.dot(&self.state.beta) - &self.y;
        let grad = self.a.t().dot(&residual);
        self.state.beta.scaled_add(-self.state.gamma / n, &grad);
        self.state.t += 1;
        &self.state
    }
}

/// `n / ‖A‖²`, the largest step for which the objective cannot increase.
fn descent_bound(a: ArrayView2<f64>) -> f64 {
    let top = power_iteration(a.t().dot(&a).view(), POWER_STEPS);
    if top > 0.0 {
        a.nrows() as f64 / top
    } else {
        f64::INFINITY
    }
}

/// Step-size bound `n / ‖K_nm R‖²` (power-iteration estimate).
pub fn step_bound(knm: ArrayView2<f64>, kmm: ArrayView2<f64>) -> Result<f64> {
    let r = pinv_factor(kmm)?;
    Ok(descent_bound(knm.dot(&r).view()))
}

/// Default step `1 / sup_i K(x_i, x_i)`.
pub fn default_step(kernel: &KernelSpec, x: ArrayView2<f64>) -> Result<f64> {
    let sup = kernel.max_diagonal(x);
    if !(sup > 0.0) {
        return param_err("kernel diagonal vanishes on the training set");
    }
    Ok(1.0 / sup)
}

/// Coefficients `α_1 .. α_{t_max}` and the training objective along the way.
#[derive(Debug, Clone)]
pub struct NytroPath {
    pub gamma: f64,
    pub alphas: Vec<Array2<f64>>,
    pub objectives: Vec<f64>,
}

pub fn nytro_path(knm: ArrayView2<f64>, kmm: ArrayView2<f64>, y: ArrayView2<f64>, gamma: f64, t_max: usize) -> Result<NytroPath> {
    if t_max == 0 {
        return param_err("t_max must be >= 1");
    }
    let mut solver = NytroSolver::new(knm, kmm, y, gamma)?;
    let mut alphas = Vec::with_capacity(t_max);
    let mut objectives = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        alphas.push(solver.step().alpha());
        objectives.push(solver.objective());
    }
    Ok(NytroPath { gamma, alphas, objectives })
}

/// How the returned iterate is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// Keep the last iterate.
    Last,
    /// [`early_stop_rule`] on the validation errors.
    Early { rel_threshold: f64 },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::Early { rel_threshold: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NytroFit {
    pub alpha: Array2<f64>,
    /// Selected iteration, 1-based.
    pub t: usize,
    pub gamma: f64,
    pub validation_errors: Vec<f64>,
}

/// Runs up to `t_max` iterations, scoring each iterate by RMSE on the
/// validation block `knm_val` (validation points x centers), then applies `stop`.
#[allow(clippy::too_many_arguments)]
pub fn nytro_fit(
    knm: ArrayView2<f64>,
    kmm: ArrayView2<f64>,
    y: ArrayView2<f64>,
    knm_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    gamma: f64,
    t_max: usize,
    stop: StopRule,
) -> Result<NytroFit> {
    if knm_val.ncols() != knm.ncols() || knm_val.nrows() != y_val.nrows() {
        return shape_err("validation block does not match the centers or the validation targets");
    }
    if t_max == 0 {
        return param_err("t_max must be >= 1");
    }
    let mut solver = NytroSolver::new(knm, kmm, y, gamma)?;
    let mut errors = Vec::with_capacity(t_max);
    let mut alphas = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let alpha = solver.step().alpha();
        errors.push(rmse(knm_val.dot(&alpha).view(), y_val));
        alphas.push(alpha);
    }
    let t = match stop {
        StopRule::Last => t_max,
        StopRule::Early { rel_threshold } => early_stop_rule(&errors, rel_threshold),
    };
    Ok(NytroFit { alpha: alphas.swap_remove(t - 1), t, gamma, validation_errors: errors })
}

/// Kernel-level NYTRO: samples nothing, uses the given centers, and reports
/// the path in the same schema as the Nyström path.
#[allow(clippy::too_many_arguments)]
pub fn nytro_model(
    kernel: KernelSpec,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    center_idx: &[usize],
    gamma: Option<f64>,
    t_max: usize,
    stop: StopRule,
) -> Result<(NystromModel, Vec<PathRecord>)> {
    let start = Instant::now();
    let centers = select_rows(x, center_idx)?;
    let knm = kernel.cross_gram(x, centers.view())?;
    let kmm = kernel.gram(centers.view());
    let kval = kernel.cross_gram(x_val, centers.view())?;
    let gamma = match gamma {
        Some(g) => g,
        None => default_step(&kernel, x)?,
    };
    let fit = nytro_fit(knm.view(), kmm.view(), y, kval.view(), y_val, gamma, t_max, stop)?;
    let elapsed = start.elapsed().as_secs_f64();
    let records = fit
        .validation_errors
        .iter()
        .enumerate()
        .map(|(i, &e)| PathRecord { t: i + 1, validation_error: e, cumulative_time_s: elapsed * (i + 1) as f64 / t_max as f64 })
        .collect();
    let model = NystromModel { kernel, centers, alpha_tilde: fit.alpha, lambda: 0.0 };
    Ok((model, records))
}

/// Smallest 1-based `t` such that no later error improves on `errors[t]` by
/// more than `rel_threshold · errors[t]`. Returns the last index if the
/// sequence keeps improving, and 1 for an empty input.
pub fn early_stop_rule(errors: &[f64], rel_threshold: f64) -> usize {
    let n = errors.len();
    if n == 0 {
        return 1;
    }
    // suffix_min[i] = min(errors[i+1..]).
    let mut suffix_min = vec![f64::INFINITY; n];
    for i in (0..n - 1).rev() {
        suffix_min[i] = suffix_min[i + 1].min(errors[i + 1]);
    }
    (0..n)
        .find(|&i| suffix_min[i] >= errors[i] * (1.0 - rel_threshold))
        .map_or(n, |i| i + 1)
}
