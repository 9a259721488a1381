//! Stochastic gradient method over linear functions `f(x) = ⟨w, x⟩`.
//!
//! From `w_1 = 0`, each step draws `j_t` uniformly from `0..n` and moves
//! `w_{t+1} = w_t - η_t ℓ'₋(y_j, ⟨w_t, x_j⟩) x_j`. The weighted average
//! `w̄_t = Σ_{k≤t} η_k w_k / Σ_{k≤t} η_k` is kept alongside the last iterate.
//! Kernel SGM goes through explicit random features.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSpec {
    Square,
    Hinge,
    Logistic,
}

impl LossSpec {
    pub fn value(&self, y: f64, a: f64) -> f64 {
        match self {
            LossSpec::Square => (y - a) * (y - a),
            LossSpec::Hinge => (1.0 - y * a).max(0.0),
            LossSpec::Logistic => softplus(-y * a),
        }
    }

    /// Left derivative in `a`; the hinge kink `ya = 1` takes the value `-y`.
    pub fn left_derivative(&self, y: f64, a: f64) -> f64 {
        match self {
            LossSpec::Square => 2.0 * (a - y),
            LossSpec::Hinge => {
                if y * a <= 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            // -y e^{-ya} / (1 + e^{-ya}) written as -y σ(-ya) to avoid overflow.
            LossSpec::Logistic => -y * sigmoid(-y * a),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn loss_left_derivative(spec: LossSpec, y: f64, a: f64) -> f64 {
    spec.left_derivative(y, a)
}

/// `η_t = eta1 · multiplier · t^{-theta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub eta1: f64,
    pub theta: f64,
    pub multiplier: f64,
}

impl StepSchedule {
    pub fn new(eta1: f64, theta: f64, multiplier: f64) -> Result<Self> {
        if !(eta1 > 0.0 && eta1.is_finite()) || !(multiplier > 0.0 && multiplier.is_finite()) {
            return param_err(format!("step scale must be positive, got eta1={eta1}, multiplier={multiplier}"));
        }
        if !(0.0..1.0).contains(&theta) {
            return param_err(format!("decay exponent must be in [0, 1), got {theta}"));
        }
        Ok(Self { eta1, theta, multiplier })
    }

    pub fn constant(eta: f64) -> Result<Self> {
        Self::new(eta, 0.0, 1.0)
    }

    /// Step at 1-based iteration `t`.
    pub fn step(&self, t: usize) -> f64 {
        self.eta1 * self.multiplier * (t as f64).powf(-self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `η_t = η₁/√n`, `t* = ⌈n^{(β+3)/(2(β+1))}⌉`.
    ConstSqrtN,
    /// `η_t = η₁/√t`, `t* = ⌈n^{2/(β+1)}⌉`.
    DecaySqrtT,
    /// `η_t = η₁ n^{-β/(β+1)}`, `t* = n`.
    TunedConst,
    /// `η_t = η₁ t^{-β/(β+1)}`, `t* = n`.
    TunedDecay,
}

/// `⌈v⌉`, with values within round-off of an integer taken as that integer.
fn stable_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Step schedule and recommended stopping time for a regime.
pub fn schedule_for_regime(regime: Regime, eta1: f64, n: usize, beta: f64) -> Result<(StepSchedule, usize)> {
    if !(beta > 0.0 && beta <= 1.0) {
        return param_err(format!("beta must be in (0, 1], got {beta}"));
    }
    if n == 0 {
        return param_err("n must be >= 1");
    }
    let nf = n as f64;
    match regime {
        Regime::ConstSqrtN => Ok((
            StepSchedule::new(eta1, 0.0, 1.0 / nf.sqrt())?,
            stable_ceil(nf.powf((beta + 3.0) / (2.0 * (beta + 1.0)))),
        )),
        Regime::DecaySqrtT => Ok((StepSchedule::new(eta1, 0.5, 1.0)?, stable_ceil(nf.powf(2.0 / (beta + 1.0))))),
        Regime::TunedConst => Ok((StepSchedule::new(eta1, 0.0, nf.powf(-beta / (beta + 1.0)))?, n)),
        Regime::TunedDecay => Ok((StepSchedule::new(eta1, beta / (beta + 1.0), 1.0)?, n)),
    }
}

/// Streaming SGM state: the current iterate `w_t` and its weighted average.
#[derive(Debug, Clone)]
pub struct SgmRunner<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    loss: LossSpec,
    sched: StepSchedule,
    rng: ChaCha8Rng,
    t: usize,
    w: Array1<f64>,
    weighted_sum: Array1<f64>,
    eta_sum: f64,
}

impl<'a> SgmRunner<'a> {
    /// Starts at `t = 1` with `w_1 = 0`.
    pub fn new(x: ArrayView2<'a, f64>, y: ArrayView1<'a, f64>, loss: LossSpec, sched: StepSchedule, seed: u64) -> Result<Self> {
        let (n, p) = x.dim();
        if n == 0 {
            return shape_err("empty design matrix");
        }
        if y.len() != n {
            return shape_err(format!("Y has {} entries, X has {n} rows", y.len()));
        }
        let mut s = Self {
            x,
            y,
            loss,
            sched,
            rng: ChaCha8Rng::seed_from_u64(seed),
            t: 1,
            w: Array1::zeros(p),
            weighted_sum: Array1::zeros(p),
            eta_sum: 0.0,
        };
        s.accumulate();
        Ok(s)
    }

    fn accumulate(&mut self) {
        let eta = self.sched.step(self.t);
        self.weighted_sum.scaled_add(eta, &self.w);
        self.eta_sum += eta;
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn iterate(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn average(&self) -> Array1<f64> {
        &self.weighted_sum / self.eta_sum
    }

    /// One draw and update, `w_t → w_{t+1}`. Returns the drawn index.
    pub fn advance(&mut self) -> usize {
        let j = self.rng.random_range(0..self.x.nrows());
        let xj = self.x.row(j);
        let g = self.loss.left_derivative(self.y[j], self.w.dot(&xj));
        let eta = self.sched.step(self.t);
        self.w.scaled_add(-eta * g, &xj);
        self.t += 1;
        self.accumulate();
        j
    }

    /// Mean loss of weights `w` on `(x, y)`.
    pub fn mean_loss(&self, w: ArrayView1<f64>, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        mean_loss(self.loss, w, x, y)
    }
}

pub fn mean_loss(loss: LossSpec, w: ArrayView1<f64>, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let scores = x.dot(&w);
    scores.iter().zip(y).map(|(&a, &yi)| loss.value(yi, a)).sum::<f64>() / y.len().max(1) as f64
}

/// Full record of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgmPath {
    /// `w_1 .. w_{t̄}`.
    pub iterates: Vec<Array1<f64>>,
    /// `w̄_1 .. w̄_{t̄}`.
    pub averages: Vec<Array1<f64>>,
    /// `η_1 .. η_{t̄}`.
    pub steps: Vec<f64>,
    /// Sample drawn to go from `w_t` to `w_{t+1}`.
    pub draws: Vec<usize>,
}

/// Runs `t̄ - 1` updates and returns `w_1 .. w_{t̄}` with their averages.
pub fn sgm_run(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    loss: LossSpec,
    sched: StepSchedule,
    t_bar: usize,
    seed: u64,
) -> Result<SgmPath> {
    if t_bar == 0 {
        return param_err("t_bar must be >= 1");
    }
    let mut run = SgmRunner::new(x, y, loss, sched, seed)?;
    let mut path = SgmPath {
        iterates: Vec::with_capacity(t_bar),
        averages: Vec::with_capacity(t_bar),
        steps: Vec::with_capacity(t_bar),
        draws: Vec::with_capacity(t_bar.saturating_sub(1)),
    };
    for t in 1..=t_bar {
        path.iterates.push(run.iterate().clone());
        path.averages.push(run.average());
        path.steps.push(sched.step(t));
        if t < t_bar {
            path.draws.push(run.advance());
        }
    }
    Ok(path)
}

/// One checkpoint of a run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

/// Runs to `t_bar` and records the losses of the last iterate every `every` steps
/// (and at `t_bar`), without storing the path.
#[allow(clippy::too_many_arguments)]
pub fn sgm_trace(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView1<f64>,
    loss: LossSpec,
    sched: StepSchedule,
    t_bar: usize,
    every: usize,
    seed: u64,
) -> Result<Vec<TraceRecord>> {
    if t_bar == 0 || every == 0 {
        return param_err("t_bar and checkpoint interval must be >= 1");
    }
    if x_val.ncols() != x.ncols() || x_val.nrows() != y_val.len() {
        return shape_err("validation set does not match the training features");
    }
    let mut run = SgmRunner::new(x, y, loss, sched, seed)?;
    let mut out = Vec::new();
    loop {
        let t = run.t();
        if t % every == 0 || t == t_bar {
            let w = run.iterate().view();
            out.push(TraceRecord { t, train_loss: mean_loss(loss, w, x, y), validation_loss: mean_loss(loss, w, x_val, y_val) });
        }
        if t == t_bar {
            break;
        }
        run.advance();
    }
    Ok(out)
}
