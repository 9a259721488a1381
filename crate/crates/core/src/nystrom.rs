//! Nyström-subsampled KRLS.
//!
//! The hypothesis space is restricted to the span of `K(·, x̃_j)` over `m`
//! centers. Besides the batch solver this module provides the incremental
//! path in `m`: the Cholesky factor of
//! `G_t = K_ntᵀ K_nt + λn K_tt` is grown one center at a time by bordering
//! the previous factor and applying one rank-one update and one downdate.

use std::time::Instant;

use log::debug;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::exact::Predictor;
use crate::kernels::KernelSpec;
use crate::linalg::{check_square, cholesky, economic_qr, eigh_sym, CholFactor, UpdateSign, RANK_TOL};

/// Coefficients over `m` centers, `f(x) = Σ_j K(x, x̃_j) α̃_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromModel {
    pub kernel: KernelSpec,
    pub centers: Array2<f64>,
    pub alpha_tilde: Array2<f64>,
    pub lambda: f64,
}

impl NystromModel {
    /// Batch fit on the rows of `x` selected by `center_idx`.
    pub fn fit(kernel: KernelSpec, x: ArrayView2<f64>, y: ArrayView2<f64>, center_idx: &[usize], lambda: f64) -> Result<Self> {
        let centers = select_rows(x, center_idx)?;
        let knm = kernel.cross_gram(x, centers.view())?;
        let kmm = kernel.gram(centers.view());
        let alpha_tilde = nkrls_fit(knm.view(), kmm.view(), y, lambda)?;
        Ok(Self { kernel, centers, alpha_tilde, lambda })
    }

    pub fn num_centers(&self) -> usize {
        self.centers.nrows()
    }
}

impl Predictor for NystromModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.kernel.cross_gram(x, self.centers.view())?.dot(&self.alpha_tilde))
    }
}

pub(crate) fn select_rows(x: ArrayView2<f64>, idx: &[usize]) -> Result<Array2<f64>> {
    if let Some(&bad) = idx.iter().find(|&&i| i >= x.nrows()) {
        return param_err(format!("center index {bad} out of range for {} points", x.nrows()));
    }
    Ok(x.select(Axis(0), idx))
}

/// Leverage scores `l_i(t) = (K (K + tnI)⁻¹)_ii`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeverageScores {
    pub scores: Array1<f64>,
    pub t: f64,
}

impl LeverageScores {
    pub fn total(&self) -> f64 {
        self.scores.sum()
    }

    /// Multiplies every score by a factor in `[1/T, T]`, emulating
    /// T-approximate scores for robustness tests.
    pub fn perturbed(&self, approx: f64, seed: u64) -> Result<Self> {
        if !(approx >= 1.0) {
            return param_err(format!("approximation factor must be >= 1, got {approx}"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lo = (1.0 / approx).ln();
        let hi = approx.ln();
        let dist = rand::distr::Uniform::new_inclusive(lo, hi).map_err(|e| Error::Parameter(e.to_string()))?;
        let scores = self.scores.mapv(|s| s * dist.sample(&mut rng).exp());
        Ok(Self { scores, t: self.t })
    }
}

/// `m` distinct indices drawn uniformly without replacement from `0..n`.
pub fn sample_uniform(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return param_err(format!("need 1 <= m <= n, got m={m}, n={n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

pub fn leverage_scores(k: ArrayView2<f64>, t: f64) -> Result<LeverageScores> {
    if !(t > 0.0) {
        return param_err(format!("leverage-score regularization must be > 0, got {t}"));
    }
    let n = check_square(k, "kernel matrix")?;
    let eig = eigh_sym(k)?;
    let shift = t * n as f64;
    let weights: Vec<f64> = eig.eigvals.iter().map(|&s| {
        let s = s.max(0.0);
        s / (s + shift)
    }).collect();
    let scores = eig
        .eigvecs
        .axis_iter(Axis(0))
        .map(|row| row.iter().zip(&weights).map(|(q, w)| q * q * w).sum::<f64>())
        .collect();
    Ok(LeverageScores { scores, t })
}

/// `m` i.i.d. draws (with replacement) with probabilities proportional to the scores.
pub fn sample_als(scores: &LeverageScores, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return param_err("need at least one center");
    }
    if scores.scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return param_err("leverage scores must be finite and nonnegative");
    }
    let dist = WeightedIndex::new(scores.scores.iter().copied())
        .map_err(|e| Error::Degenerate(format!("leverage-score distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| dist.sample(&mut rng)).collect())
}

/// Change of variable `R` (`m x k`) with `R Rᵀ = K_mm^†`, `k` the numerical rank.
///
/// Built as `R = S T⁻¹` from the economic QR `K_mm = S D` and the Cholesky
/// factor `T` of `Sᵀ K_mm S`. If that small Cholesky fails on a nearly
/// singular block, the eigen route `V_k Σ_k^{-1/2}` is used instead.
pub fn pinv_factor(kmm: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_square(kmm, "K_mm")?;
    let qr = economic_qr(kmm)?;
    if qr.rank == 0 {
        return Err(Error::Degenerate("K_mm has numerical rank 0".into()));
    }
    let mut inner = qr.s.t().dot(&kmm).dot(&qr.s);
    symmetrize(&mut inner);
    match cholesky(inner.view()) {
        Ok(t) => {
            // R = S T⁻¹  ⇔  Rᵀ = T⁻ᵀ Sᵀ.
            let rt = t.tri_solve(qr.s.t(), true)?;
            Ok(rt.reversed_axes())
        }
        Err(Error::NotPositiveDefinite { .. }) => {
            debug!("pinv_factor: falling back to eigendecomposition");
            let eig = eigh_sym(kmm)?;
            let cut = RANK_TOL * eig.max_eigval();
            let k = eig.eigvals.iter().filter(|&&v| v > cut).count();
            if k == 0 {
                return Err(Error::Degenerate("K_mm has numerical rank 0".into()));
            }
            let mut r = eig.eigvecs.slice(s![.., ..k]).to_owned();
            for (mut col, &v) in r.axis_iter_mut(Axis(1)).zip(eig.eigvals.iter()) {
                col /= v.sqrt();
            }
            Ok(r)
        }
        Err(e) => Err(e),
    }
}

fn symmetrize(m: &mut Array2<f64>) {
    let t = m.t().to_owned();
    *m += &t;
    *m *= 0.5;
}

/// Batch Nyström KRLS: `α̃ = R (AᵀA + λnI)⁻¹ AᵀY` with `A = K_nm R`.
pub fn nkrls_fit(knm: ArrayView2<f64>, kmm: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    let (n, m) = knm.dim();
    if kmm.dim() != (m, m) {
        return shape_err(format!("K_nm is {n}x{m} but K_mm is {}x{}", kmm.nrows(), kmm.ncols()));
    }
    if y.nrows() != n {
        return shape_err(format!("Y has {} rows, K_nm has {n}", y.nrows()));
    }
    let r = pinv_factor(kmm)?;
    let a = knm.dot(&r);
    let mut gram = a.t().dot(&a);
    symmetrize(&mut gram);
    gram.diag_mut().mapv_inplace(|v| v + lambda * n as f64);
    let beta = cholesky(gram.view())?.solve(a.t().dot(&y).view())?;
    Ok(r.dot(&beta))
}

/// A step at which the rank-one route was abandoned for a full refactorization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackEvent {
    pub step: usize,
    pub reason: String,
}

/// Relative residual above which an incremental factor update is rejected.
const UPDATE_CHECK_TOL: f64 = 1e-8;

/// Incremental Nyström KRLS solver, one center per [`IncrementalNystrom::push_center`].
///
/// A center whose kernel column is (numerically) in the span of the earlier
/// ones, such as a duplicate drawn by with-replacement sampling, leaves the
/// hypothesis space unchanged. It is kept with a zero coefficient and does
/// not enter the factor.
#[derive(Debug, Clone)]
pub struct IncrementalNystrom<'a> {
    kernel: KernelSpec,
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    lambda_n: f64,
    capacity: usize,
    t: usize,
    // Positions (in 0..t) of the centers that entered the factor.
    active: Vec<usize>,
    // Kernel columns K(x_i, x̃_j) of the active centers, stored as rows (capacity x n).
    at: Array2<f64>,
    // K(x̃_i, x̃_j) over active centers (capacity x capacity).
    ktt: Array2<f64>,
    aty: Array2<f64>,
    centers: Array2<f64>,
    factor: Option<CholFactor>,
    events: Vec<FallbackEvent>,
}

/// Schur complements below this fraction of `γ` mark a redundant center.
const REDUNDANT_TOL: f64 = 1e-10;

impl<'a> IncrementalNystrom<'a> {
    pub fn new(kernel: KernelSpec, x: ArrayView2<'a, f64>, y: ArrayView2<'a, f64>, lambda: f64, capacity: usize) -> Result<Self> {
        if !(lambda > 0.0) {
            return param_err(format!("lambda must be > 0, got {lambda}"));
        }
        let (n, d) = x.dim();
        if y.nrows() != n {
            return shape_err(format!("Y has {} rows, X has {n}", y.nrows()));
        }
        Ok(Self {
            kernel,
            x,
            y,
            lambda_n: lambda * n as f64,
            capacity,
            t: 0,
            active: Vec::with_capacity(capacity),
            at: Array2::zeros((capacity, n)),
            ktt: Array2::zeros((capacity, capacity)),
            aty: Array2::zeros((capacity, y.ncols())),
            centers: Array2::zeros((capacity, d)),
            factor: None,
            events: Vec::new(),
        })
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    /// Positions of the centers that carry a coefficient.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn events(&self) -> &[FallbackEvent] {
        &self.events
    }

    pub fn centers(&self) -> ArrayView2<'_, f64> {
        self.centers.slice(s![..self.t, ..])
    }

    pub fn factor(&self) -> Option<&CholFactor> {
        self.factor.as_ref()
    }

    /// `G = K_ntᵀ K_nt + λn K_tt` over the active centers, assembled directly.
    pub fn gram_matrix(&self) -> Array2<f64> {
        let p = self.active.len();
        let at = self.at.slice(s![..p, ..]);
        at.dot(&at.t()) + &(self.ktt.slice(s![..p, ..p]).to_owned() * self.lambda_n)
    }

    /// Adds center `c` and returns `α̃_t` (one row per center pushed so far).
    pub fn push_center(&mut self, c: ArrayView1<f64>) -> Result<Array2<f64>> {
        self.add_center(c)?;
        self.coefficients()
    }

    /// Adds center `c`, updating the factor without solving for coefficients.
    pub fn add_center(&mut self, c: ArrayView1<f64>) -> Result<()> {
        if self.t == self.capacity {
            return param_err(format!("capacity of {} centers exhausted", self.capacity));
        }
        let p = self.active.len();
        let a_t = self.kernel.column(self.x, c)?;
        let active_centers = self.centers.select(Axis(0), &self.active);
        let b_t = self.kernel.column(active_centers.view(), c)?;
        let k_self = self.kernel.eval(c, c)?;
        let gamma = a_t.dot(&a_t) + self.lambda_n * k_self;
        let c_t = self.at.slice(s![..p, ..]).dot(&a_t) + &(&b_t * self.lambda_n);

        self.centers.row_mut(self.t).assign(&c);
        self.t += 1;

        let redundant = match &self.factor {
            None => !(gamma > 0.0),
            Some(prev) => {
                let w = prev.tri_solve(c_t.view().insert_axis(Axis(1)), true)?;
                let schur = gamma - w.iter().map(|v| v * v).sum::<f64>();
                !(schur > REDUNDANT_TOL * gamma)
            }
        };
        if redundant {
            debug!("incremental nystrom: center {} is redundant", self.t);
            return Ok(());
        }

        self.at.row_mut(p).assign(&a_t);
        self.ktt.slice_mut(s![..p, p]).assign(&b_t);
        self.ktt.slice_mut(s![p, ..p]).assign(&b_t);
        self.ktt[[p, p]] = k_self;
        self.aty.row_mut(p).assign(&a_t.dot(&self.y));
        self.active.push(self.t - 1);

        let factor = match self.factor.take() {
            None => CholFactor::from_upper(Array2::from_elem((1, 1), gamma.sqrt()))?,
            Some(prev) => match bordered_update(&prev, c_t.view(), gamma, UPDATE_CHECK_TOL) {
                Ok(f) => f,
                Err(reason) => {
                    debug!("incremental nystrom: step {} refactorizes ({reason})", self.t);
                    self.events.push(FallbackEvent { step: self.t, reason });
                    cholesky(self.gram_matrix().view())?
                }
            },
        };
        self.factor = Some(factor);
        Ok(())
    }

    /// `α̃_t = R⁻¹R⁻ᵀ K_ntᵀ Y`, zero on redundant centers.
    pub fn coefficients(&self) -> Result<Array2<f64>> {
        let mut alpha = Array2::zeros((self.t, self.y.ncols()));
        if let Some(f) = &self.factor {
            let sol = f.solve(self.aty.slice(s![..self.active.len(), ..]))?;
            for (row, &pos) in sol.axis_iter(Axis(0)).zip(&self.active) {
                alpha.row_mut(pos).assign(&row);
            }
        }
        Ok(alpha)
    }
}

/// Grows `RᵀR = G` to the bordered matrix `[[G, c], [cᵀ, γ]]` with one
/// rank-one update by `u = (c/(1+g), g)` and one downdate by
/// `v = (c/(1+g), -1)`, `g = sqrt(1 + γ)`.
///
/// Returns a description of the failure when the downdate breaks down or the
/// new last column misses `(c, γ)` by more than `tol` relative.
pub(crate) fn bordered_update(prev: &CholFactor, c: ArrayView1<f64>, gamma: f64, tol: f64) -> std::result::Result<CholFactor, String> {
    let (u, v) = bordered_update_vectors(c, gamma);
    let mut r = prev.bordered();
    r.rank_one_in_place(u.view(), UpdateSign::Plus).map_err(|e| format!("update failed: {e}"))?;
    r.rank_one_in_place(v.view(), UpdateSign::Minus).map_err(|e| format!("downdate failed: {e}"))?;

    // Check the new column of RᵀR against (c, γ).
    let p = r.dim();
    // Rᵀ r_p accumulated over rows of R.
    let mut got = Array1::<f64>::zeros(p);
    for row in r.r().axis_iter(Axis(0)) {
        got.scaled_add(row[p - 1], &row);
    }
    let mut err = 0.0f64;
    let mut scale = gamma.abs();
    for i in 0..p - 1 {
        err = err.max((got[i] - c[i]).abs());
        scale = scale.max(c[i].abs());
    }
    err = err.max((got[p - 1] - gamma).abs());
    if !(err <= tol * scale.max(f64::MIN_POSITIVE)) {
        return Err(format!("update residual {:.3e} relative to {:.3e}", err, scale));
    }
    Ok(r)
}

/// The pair `(u, v)` with `uuᵀ - vvᵀ = [[0, c], [cᵀ, γ]]`.
pub fn bordered_update_vectors(c: ArrayView1<f64>, gamma: f64) -> (Array1<f64>, Array1<f64>) {
    let g = (1.0 + gamma).sqrt();
    let p = c.len() + 1;
    let mut u = Array1::zeros(p);
    let mut v = Array1::zeros(p);
    u.slice_mut(s![..p - 1]).assign(&(&c / (1.0 + g)));
    v.slice_mut(s![..p - 1]).assign(&(&c / (1.0 + g)));
    u[p - 1] = g;
    v[p - 1] = -1.0;
    (u, v)
}

/// Solutions `α̃_1 .. α̃_m` along a center ordering.
#[derive(Debug, Clone)]
pub struct NystromPath {
    pub kernel: KernelSpec,
    pub lambda: f64,
    pub centers: Array2<f64>,
    pub alphas: Vec<Array2<f64>>,
    pub events: Vec<FallbackEvent>,
}

impl NystromPath {
    /// Model using the first `t` centers (1-based).
    pub fn model(&self, t: usize) -> NystromModel {
        NystromModel {
            kernel: self.kernel,
            centers: self.centers.slice(s![..t, ..]).to_owned(),
            alpha_tilde: self.alphas[t - 1].clone(),
            lambda: self.lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Incremental regularization path in the number of centers.
pub fn incremental_path(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    center_order: &[usize],
    lambda: f64,
    kernel: KernelSpec,
) -> Result<NystromPath> {
    if center_order.is_empty() {
        return param_err("center order is empty");
    }
    let centers = select_rows(x, center_order)?;
    let mut solver = IncrementalNystrom::new(kernel, x, y, lambda, center_order.len())?;
    let mut alphas = Vec::with_capacity(center_order.len());
    for row in centers.axis_iter(Axis(0)) {
        alphas.push(solver.push_center(row)?);
    }
    let events = solver.events().to_vec();
    Ok(NystromPath { kernel, lambda, centers, alphas, events })
}

/// One row of a path report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: usize,
    pub validation_error: f64,
    pub cumulative_time_s: f64,
}

/// Runs the incremental path and scores every step on a validation set.
#[allow(clippy::too_many_arguments)]
pub fn path_report(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    x_val: ArrayView2<f64>,
    y_val: ArrayView2<f64>,
    center_order: &[usize],
    lambda: f64,
    kernel: KernelSpec,
    metric: impl Fn(ArrayView2<f64>, ArrayView2<f64>) -> f64,
) -> Result<(Vec<PathRecord>, Vec<FallbackEvent>)> {
    let start = Instant::now();
    let centers = select_rows(x, center_order)?;
    let k_val = kernel.cross_gram(x_val, centers.view())?;
    let mut solver = IncrementalNystrom::new(kernel, x, y, lambda, center_order.len())?;
    let mut records = Vec::with_capacity(center_order.len());
    for (t, row) in centers.axis_iter(Axis(0)).enumerate() {
        let alpha = solver.push_center(row)?;
        let pred = k_val.slice(s![.., ..=t]).dot(&alpha);
        records.push(PathRecord {
            t: t + 1,
            validation_error: metric(pred.view(), y_val),
            cumulative_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok((records, solver.events().to_vec()))
}
