//! Model selection: effective dimensions, hold-out and V-fold
//! cross-validation, and the (λ, m) error surface for Nyström KRLS.

use std::cmp::Ordering;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::exact::Predictor;
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky, eigh_sym};
use crate::nystrom::{leverage_scores, nkrls_fit, sample_uniform, IncrementalNystrom};

/// `d_eff(λ) = Tr(K (K + λnI)⁻¹) = Σ σ_i / (σ_i + λn)`.
pub fn effective_dimension(k: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    let eig = eigh_sym(k)?;
    let shift = lambda * eig.dim() as f64;
    Ok(eig.eigvals.iter().map(|&s| s.max(0.0) / (s.max(0.0) + shift)).sum())
}

/// `d̃(λ) = n · max_i (K (K + λnI)⁻¹)_ii`.
pub fn max_leverage_dimension(k: ArrayView2<f64>, lambda: f64) -> Result<f64> {
    let ls = leverage_scores(k, lambda)?;
    Ok(ls.scores.len() as f64 * ls.scores.iter().copied().fold(0.0, f64::max))
}

/// Root mean squared error over every entry.
pub fn rmse(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> f64 {
    let diff = &pred - &truth;
    (diff.mapv(|v| v * v).sum() / diff.len().max(1) as f64).sqrt()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose predicted class differs from the true one.
///
/// Single-column scores are read as signed binary outputs, so the sign is
/// compared. Otherwise both matrices are compared by row argmax.
pub fn misclassification(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> f64 {
    let n = pred.nrows();
    if n == 0 {
        return 0.0;
    }
    let wrong = if pred.ncols() == 1 {
        pred.column(0).iter().zip(truth.column(0)).filter(|(p, t)| (**p >= 0.0) != (**t >= 0.0)).count()
    } else {
        pred.axis_iter(Axis(0)).zip(truth.axis_iter(Axis(0))).filter(|(p, t)| argmax(*p) != argmax(*t)).count()
    };
    wrong as f64 / n as f64
}

/// Validation metric, chosen by task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Misclassification,
}

impl Metric {
    pub fn eval(&self, pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> f64 {
        match self {
            Metric::Rmse => rmse(pred, truth),
            Metric::Misclassification => misclassification(pred, truth),
        }
    }
}

/// A grid point. Unused coordinates are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyper {
    pub lambda: Option<f64>,
    pub m: Option<usize>,
    pub t: Option<usize>,
}

impl Hyper {
    pub fn lambda(lambda: f64) -> Self {
        Self { lambda: Some(lambda), ..Self::default() }
    }

    /// Order by decreasing model complexity: larger λ first, then smaller m, then smaller t.
    pub fn complexity_cmp(&self, other: &Self) -> Ordering {
        let lam = match (self.lambda, other.lambda) {
            (Some(a), Some(b)) => b.partial_cmp(&a).unwrap_or(Ordering::Equal),
            _ => Ordering::Equal,
        };
        lam.then(self.m.cmp(&other.m)).then(self.t.cmp(&other.t))
    }
}

/// Grid of validation errors and the selected point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: Hyper,
    pub best_error: f64,
    pub table: Vec<(Hyper, f64)>,
}

/// Argmin of the table; ties go to the least complex entry.
pub fn select_best(table: &[(Hyper, f64)]) -> Result<(Hyper, f64)> {
    table
        .iter()
        .filter(|(_, e)| !e.is_nan())
        .min_by(|(ha, ea), (hb, eb)| ea.partial_cmp(eb).unwrap_or(Ordering::Equal).then(ha.complexity_cmp(hb)))
        .copied()
        .ok_or_else(|| Error::Selection("no finite validation error in the grid".into()))
}

/// Random split into (train, validation) with `round(val_fraction · n)` validation points.
pub fn holdout_split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return param_err(format!("split fraction must be in (0, 1), got {val_fraction}"));
    }
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    if n < 2 {
        return param_err("need at least 2 points to split");
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = perm.split_off(n - n_val);
    Ok((perm, val))
}

/// `v` disjoint folds covering `0..n`, sizes differing by at most one.
pub fn vfold_indices(n: usize, v: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if v < 2 || v > n {
        return param_err(format!("need 2 <= V <= n, got V={v}, n={n}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / v;
    let extra = n % v;
    let mut folds = Vec::with_capacity(v);
    let mut start = 0;
    for f in 0..v {
        let len = base + usize::from(f < extra);
        folds.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Fits a predictor at one grid point from a training block.
pub trait Trainer: Sync {
    fn fit(&self, h: &Hyper, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Box<dyn Predictor + Send>>;
}

impl<F> Trainer for F
where
    F: Fn(&Hyper, ArrayView2<f64>, ArrayView2<f64>) -> Result<Box<dyn Predictor + Send>> + Sync,
{
    fn fit(&self, h: &Hyper, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Box<dyn Predictor + Send>> {
        self(h, x, y)
    }
}

fn check_data(x: ArrayView2<f64>, y: ArrayView2<f64>, grid: &[Hyper]) -> Result<()> {
    if grid.is_empty() {
        return param_err("hyperparameter grid is empty");
    }
    if x.nrows() != y.nrows() {
        return shape_err(format!("X has {} rows, Y has {}", x.nrows(), y.nrows()));
    }
    Ok(())
}

fn split_error(
    trainer: &dyn Trainer,
    h: &Hyper,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    train: &[usize],
    val: &[usize],
    metric: Metric,
) -> Result<f64> {
    let model = trainer.fit(h, x.select(Axis(0), train).view(), y.select(Axis(0), train).view())?;
    let pred = model.predict(x.select(Axis(0), val).view())?;
    Ok(metric.eval(pred.view(), y.select(Axis(0), val).view()))
}

/// Hold-out cross-validation over `grid`; grid points are evaluated in parallel.
pub fn holdout_cv(
    trainer: &dyn Trainer,
    grid: &[Hyper],
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    val_fraction: f64,
    seed: u64,
    metric: Metric,
) -> Result<CvResult> {
    check_data(x, y, grid)?;
    let (train, val) = holdout_split(x.nrows(), val_fraction, seed)?;
    let errors: Result<Vec<f64>> = grid.par_iter().map(|h| split_error(trainer, h, x, y, &train, &val, metric)).collect();
    finish(grid, errors?)
}

/// V-fold cross-validation; `V = n` is leave-one-out.
pub fn vfold_cv(
    trainer: &dyn Trainer,
    grid: &[Hyper],
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    v: usize,
    seed: u64,
    metric: Metric,
) -> Result<CvResult> {
    check_data(x, y, grid)?;
    let folds = vfold_indices(x.nrows(), v, seed)?;
    let errors: Result<Vec<f64>> = grid
        .par_iter()
        .map(|h| {
            let mut total = 0.0;
            for (f, val) in folds.iter().enumerate() {
                let train: Vec<usize> =
                    folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, idx)| idx.iter().copied()).collect();
                total += split_error(trainer, h, x, y, &train, val, metric)?;
            }
            Ok(total / folds.len() as f64)
        })
        .collect();
    finish(grid, errors?)
}

fn finish(grid: &[Hyper], errors: Vec<f64>) -> Result<CvResult> {
    let table: Vec<(Hyper, f64)> = grid.iter().copied().zip(errors).collect();
    let (best, best_error) = select_best(&table)?;
    Ok(CvResult { best, best_error, table })
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || count == 0 {
        return param_err(format!("invalid log grid [{lo}, {hi}] with {count} points"));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect())
}

/// `count` integers linearly spaced from `lo` to `hi` inclusive (deduplicated).
pub fn linear_grid(lo: usize, hi: usize, count: usize) -> Result<Vec<usize>> {
    if lo == 0 || hi < lo || count == 0 {
        return param_err(format!("invalid linear grid [{lo}, {hi}] with {count} points"));
    }
    if count == 1 {
        return Ok(vec![hi]);
    }
    let mut g: Vec<usize> =
        (0..count).map(|i| lo + ((hi - lo) as f64 * i as f64 / (count - 1) as f64).round() as usize).collect();
    g.dedup();
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceTimings {
    /// Wall time of each λ row, in grid order.
    pub per_lambda_s: Vec<f64>,
    pub total_s: f64,
}

/// Validation errors over a (λ, m) grid: `errors[i][j]` is at `(lambda_grid[i], m_grid[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSurface {
    pub lambda_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub errors: Vec<Vec<f64>>,
    pub seed: u64,
    pub timings: SurfaceTimings,
}

impl ErrorSurface {
    pub fn best(&self) -> Result<(Hyper, f64)> {
        let table: Vec<(Hyper, f64)> = self
            .lambda_grid
            .iter()
            .zip(&self.errors)
            .flat_map(|(&l, row)| {
                self.m_grid.iter().zip(row).map(move |(&m, &e)| (Hyper { lambda: Some(l), m: Some(m), t: None }, e))
            })
            .collect();
        select_best(&table)
    }
}

/// Shared setup of the (λ, m) surface: split and center order.
#[derive(Debug, Clone)]
pub struct SurfaceSetup {
    pub x_train: Array2<f64>,
    pub y_train: Array2<f64>,
    pub x_val: Array2<f64>,
    pub y_val: Array2<f64>,
    /// Indices into the training block, first `m_max` used as centers in order.
    pub center_order: Vec<usize>,
}

impl SurfaceSetup {
    /// 20% hold-out split and a uniform center order, both from `seed`.
    pub fn new(x: ArrayView2<f64>, y: ArrayView2<f64>, m_max: usize, seed: u64) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return shape_err(format!("X has {} rows, Y has {}", x.nrows(), y.nrows()));
        }
        let (train, val) = holdout_split(x.nrows(), 0.2, seed)?;
        let center_order = sample_uniform(train.len(), m_max, seed.wrapping_add(1))?;
        Ok(Self {
            x_train: x.select(Axis(0), &train),
            y_train: y.select(Axis(0), &train),
            x_val: x.select(Axis(0), &val),
            y_val: y.select(Axis(0), &val),
            center_order,
        })
    }

    fn centers(&self) -> Array2<f64> {
        self.x_train.select(Axis(0), &self.center_order)
    }
}

fn check_grids(lambda_grid: &[f64], m_grid: &[usize]) -> Result<usize> {
    if lambda_grid.is_empty() || m_grid.is_empty() {
        return param_err("lambda and m grids must be non-empty");
    }
    if lambda_grid.iter().any(|&l| !(l > 0.0)) {
        return param_err("lambda grid values must be > 0");
    }
    if m_grid.windows(2).any(|w| w[0] >= w[1]) || m_grid[0] == 0 {
        return param_err("m grid must be positive and strictly increasing");
    }
    Ok(*m_grid.last().unwrap())
}

/// One incremental Nyström path per λ supplies the errors for every m.
pub fn grid_path_lambda_m(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    kernel: KernelSpec,
    lambda_grid: &[f64],
    m_grid: &[usize],
    seed: u64,
    metric: Metric,
) -> Result<ErrorSurface> {
    let m_max = check_grids(lambda_grid, m_grid)?;
    let setup = SurfaceSetup::new(x, y, m_max, seed)?;
    surface_incremental(&setup, kernel, lambda_grid, m_grid, seed, metric)
}

/// Incremental surface on a prepared split.
pub fn surface_incremental(
    setup: &SurfaceSetup,
    kernel: KernelSpec,
    lambda_grid: &[f64],
    m_grid: &[usize],
    seed: u64,
    metric: Metric,
) -> Result<ErrorSurface> {
    let m_max = check_grids(lambda_grid, m_grid)?;
    let start = Instant::now();
    let centers = setup.centers();
    if centers.nrows() < m_max {
        return param_err(format!("center order has {} entries, m grid needs {m_max}", centers.nrows()));
    }
    let k_val = kernel.cross_gram(setup.x_val.view(), centers.view())?;
    let rows: Result<Vec<(Vec<f64>, f64)>> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let t0 = Instant::now();
            let mut solver = IncrementalNystrom::new(kernel, setup.x_train.view(), setup.y_train.view(), lambda, m_max)?;
            let mut errs = Vec::with_capacity(m_grid.len());
            let mut next = 0;
            for (t, c) in centers.axis_iter(Axis(0)).take(m_max).enumerate() {
                solver.add_center(c)?;
                if t + 1 == m_grid[next] {
                    let alpha = solver.coefficients()?;
                    let pred = k_val.slice(s![.., ..=t]).dot(&alpha);
                    errs.push(metric.eval(pred.view(), setup.y_val.view()));
                    next += 1;
                }
            }
            Ok((errs, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let (errors, per_lambda_s) = rows?.into_iter().unzip();
    Ok(ErrorSurface {
        lambda_grid: lambda_grid.to_vec(),
        m_grid: m_grid.to_vec(),
        errors,
        seed,
        timings: SurfaceTimings { per_lambda_s, total_s: start.elapsed().as_secs_f64() },
    })
}

/// Baseline: every (λ, m) cell recomputes `K_nm`, `G` and a Cholesky solve.
pub fn surface_naive(
    setup: &SurfaceSetup,
    kernel: KernelSpec,
    lambda_grid: &[f64],
    m_grid: &[usize],
    seed: u64,
    metric: Metric,
) -> Result<ErrorSurface> {
    let m_max = check_grids(lambda_grid, m_grid)?;
    let start = Instant::now();
    let centers = setup.centers();
    if centers.nrows() < m_max {
        return param_err(format!("center order has {} entries, m grid needs {m_max}", centers.nrows()));
    }
    let n = setup.x_train.nrows() as f64;
    let rows: Result<Vec<(Vec<f64>, f64)>> = lambda_grid
        .par_iter()
        .map(|&lambda| {
            let t0 = Instant::now();
            let errs: Result<Vec<f64>> = m_grid
                .iter()
                .map(|&m| {
                    let c = centers.slice(s![..m, ..]);
                    let knm = kernel.cross_gram(setup.x_train.view(), c)?;
                    let kmm = kernel.gram(c);
                    let mut g = knm.t().dot(&knm);
                    g.scaled_add(lambda * n, &kmm);
                    let rhs = knm.t().dot(&setup.y_train);
                    let alpha = match cholesky(g.view()) {
                        Ok(f) => f.solve(rhs.view())?,
                        Err(_) => nkrls_fit(knm.view(), kmm.view(), setup.y_train.view(), lambda)?,
                    };
                    let pred = kernel.cross_gram(setup.x_val.view(), c)?.dot(&alpha);
                    Ok(metric.eval(pred.view(), setup.y_val.view()))
                })
                .collect();
            Ok((errs?, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let (errors, per_lambda_s) = rows?.into_iter().unzip();
    Ok(ErrorSurface {
        lambda_grid: lambda_grid.to_vec(),
        m_grid: m_grid.to_vec(),
        errors,
        seed,
        timings: SurfaceTimings { per_lambda_s, total_s: start.elapsed().as_secs_f64() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::DualModel;
    use crate::nystrom::NystromModel;
    use crate::testutil::{random_matrix, random_pd};
    use std::sync::Arc;

    fn explicit_inverse(m: ArrayView2<f64>) -> Array2<f64> {
        crate::linalg::from_nalgebra(&crate::linalg::to_nalgebra(m).try_inverse().unwrap())
    }

    #[test]
    fn effective_dimension_examples() {
        let n = 6;
        let lambda = 0.05;
        let i = Array2::<f64>::eye(n);
        let want = n as f64 / (1.0 + lambda * n as f64);
        assert!((effective_dimension(i.view(), lambda).unwrap() - want).abs() < 1e-12);
        assert!((max_leverage_dimension(i.view(), lambda).unwrap() - want).abs() < 1e-12);
        assert!(effective_dimension(i.view(), 1e12 / n as f64).unwrap() < 1e-6);
        assert!(effective_dimension(i.view(), 0.0).is_err());
        assert!(max_leverage_dimension(i.view(), -1.0).is_err());
    }

    #[test]
    fn effective_dimension_matches_explicit_trace() {
        let k = random_pd(10, 3) / 5.0;
        let lambda = 0.02;
        let shifted = &k + &(Array2::<f64>::eye(10) * (lambda * 10.0));
        let tr = k.dot(&explicit_inverse(shifted.view())).diag().sum();
        assert!((effective_dimension(k.view(), lambda).unwrap() - tr).abs() < 1e-9);
        let ls = leverage_scores(k.view(), lambda).unwrap();
        assert!((ls.total() - tr).abs() < 1e-8);
    }

    #[test]
    fn effective_dimension_strictly_decreasing() {
        let k = random_pd(8, 4);
        let grid = log_grid(1e-4, 10.0, 15).unwrap();
        let d: Vec<f64> = grid.iter().map(|&l| effective_dimension(k.view(), l).unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rank_one_leverage_concentrates() {
        // K = v vᵀ: leverage l_i = v_i² / (‖v‖² + λn).
        let v = ndarray::array![0.0, 3.0, 0.0, 1.0];
        let k = v.view().insert_axis(Axis(1)).dot(&v.view().insert_axis(Axis(0)));
        let lambda = 0.1;
        let denom = v.dot(&v) + lambda * 4.0;
        let d = max_leverage_dimension(k.view(), lambda).unwrap();
        assert!((d - 4.0 * 9.0 / denom).abs() < 1e-10);
        let ls = leverage_scores(k.view(), lambda).unwrap();
        assert!(ls.scores[0].abs() < 1e-12 && ls.scores[2].abs() < 1e-12);
    }

    #[test]
    fn dimension_sandwich() {
        for seed in 0..5 {
            let mut k = random_pd(12, seed);
            let top = eigh_sym(k.view()).unwrap().max_eigval();
            k /= top;
            for &l in &log_grid(1e-4, 1.0, 20).unwrap() {
                let de = effective_dimension(k.view(), l).unwrap();
                let dt = max_leverage_dimension(k.view(), l).unwrap();
                assert!(de <= dt + 1e-10 && dt <= 1.0 / l + 1e-10);
            }
        }
    }

    #[test]
    fn metrics() {
        let p = ndarray::array![[1.0], [2.0]];
        let t = ndarray::array![[1.0], [4.0]];
        assert!((rmse(p.view(), t.view()) - 2f64.sqrt()).abs() < 1e-15);
        let p = ndarray::array![[0.1, 0.9], [0.6, 0.4], [0.5, 0.5]];
        let t = ndarray::array![[0.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        assert!((misclassification(p.view(), t.view()) - 1.0 / 3.0).abs() < 1e-15);
        let p = ndarray::array![[0.3], [-0.2]];
        let t = ndarray::array![[1.0], [1.0]];
        assert_eq!(misclassification(p.view(), t.view()), 0.5);
    }

    #[test]
    fn tie_break_prefers_simplest() {
        let table = vec![
            (Hyper { lambda: Some(0.1), m: Some(5), t: None }, 1.0),
            (Hyper { lambda: Some(1.0), m: Some(9), t: None }, 1.0),
            (Hyper { lambda: Some(1.0), m: Some(3), t: None }, 1.0),
            (Hyper { lambda: Some(0.01), m: Some(1), t: None }, 2.0),
        ];
        let (best, _) = select_best(&table).unwrap();
        assert_eq!(best, Hyper { lambda: Some(1.0), m: Some(3), t: None });
        assert!(select_best(&[]).is_err());
    }

    #[test]
    fn split_and_fold_contracts() {
        let (tr, va) = holdout_split(10, 0.2, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (8, 2));
        assert_eq!(holdout_split(10, 0.2, 3).unwrap(), (tr, va));
        assert!(holdout_split(10, 1.0, 3).is_err());

        let folds = vfold_indices(5, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let folds = vfold_indices(23, 4, 1).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(vfold_indices(5, 1, 0).is_err());
        assert!(vfold_indices(5, 6, 0).is_err());
    }

    fn krls_trainer(kernel: KernelSpec) -> impl Fn(&Hyper, ArrayView2<f64>, ArrayView2<f64>) -> Result<Box<dyn Predictor + Send>> {
        move |h, x, y| {
            let m = DualModel::fit_krls(kernel, Arc::new(x.to_owned()), y, h.lambda.unwrap())?;
            Ok(Box::new(m) as Box<dyn Predictor + Send>)
        }
    }

    #[test]
    fn cv_single_point_and_ties() {
        let x = random_matrix(20, 2, 1);
        let y = random_matrix(20, 1, 2);
        let tr = krls_trainer(KernelSpec::Gaussian { sigma: 1.0 });
        let r = holdout_cv(&tr, &[Hyper::lambda(0.1)], x.view(), y.view(), 0.25, 0, Metric::Rmse).unwrap();
        assert_eq!(r.best, Hyper::lambda(0.1));
        assert!(holdout_cv(&tr, &[], x.view(), y.view(), 0.25, 0, Metric::Rmse).is_err());

        // Identical models at two λ labels: the constant trainer ignores λ.
        let constant = |_: &Hyper, _: ArrayView2<f64>, _: ArrayView2<f64>| {
            Ok(Box::new(crate::exact::PrimalModel { weights: Array2::zeros((2, 1)) }) as Box<dyn Predictor + Send>)
        };
        let r = vfold_cv(&constant, &[Hyper::lambda(0.1), Hyper::lambda(3.0)], x.view(), y.view(), 4, 0, Metric::Rmse).unwrap();
        assert_eq!(r.best, Hyper::lambda(3.0));
    }

    #[test]
    fn two_fold_average_matches_manual_splits() {
        let x = random_matrix(16, 2, 3);
        let y = random_matrix(16, 1, 4);
        let kernel = KernelSpec::Gaussian { sigma: 1.0 };
        let tr = krls_trainer(kernel);
        let h = Hyper::lambda(0.05);
        let r = vfold_cv(&tr, &[h], x.view(), y.view(), 2, 7, Metric::Rmse).unwrap();
        let folds = vfold_indices(16, 2, 7).unwrap();
        let err = |train: &[usize], val: &[usize]| {
            let m = DualModel::fit_krls(kernel, Arc::new(x.select(Axis(0), train)), y.select(Axis(0), train).view(), 0.05).unwrap();
            rmse(m.predict(x.select(Axis(0), val).view()).unwrap().view(), y.select(Axis(0), val).view())
        };
        let manual = 0.5 * (err(&folds[1], &folds[0]) + err(&folds[0], &folds[1]));
        assert!((r.best_error - manual).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = log_grid(1e-3, 1e1, 5).unwrap();
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[4] - 10.0).abs() < 1e-12);
        assert_eq!(linear_grid(10, 100, 10).unwrap(), vec![10, 20, 30, 40, 50, 60, 70, 80, 90, 100]);
        assert_eq!(linear_grid(1, 3, 10).unwrap(), vec![1, 2, 3]);
        assert!(log_grid(0.0, 1.0, 3).is_err());
    }

    #[test]
    fn surface_points_match_standalone_fits() {
        let kernel = KernelSpec::Gaussian { sigma: 1.0 };
        let x = random_matrix(100, 2, 5);
        let y = random_matrix(100, 1, 6);
        let lambdas = [1e-4, 1e-2];
        let ms = [3, 8, 15];
        let surf = grid_path_lambda_m(x.view(), y.view(), kernel, &lambdas, &ms, 11, Metric::Rmse).unwrap();
        let setup = SurfaceSetup::new(x.view(), y.view(), 15, 11).unwrap();
        let naive = surface_naive(&setup, kernel, &lambdas, &ms, 11, Metric::Rmse).unwrap();
        for (i, &l) in lambdas.iter().enumerate() {
            for (j, &m) in ms.iter().enumerate() {
                let model = NystromModel::fit(kernel, setup.x_train.view(), setup.y_train.view(), &setup.center_order[..m], l).unwrap();
                let e = rmse(model.predict(setup.x_val.view()).unwrap().view(), setup.y_val.view());
                assert!((surf.errors[i][j] - e).abs() < 1e-6 * e.max(1.0));
                assert!((naive.errors[i][j] - e).abs() < 1e-6 * e.max(1.0));
            }
        }
        let json = serde_json::to_value(&surf).unwrap();
        for key in ["lambda_grid", "m_grid", "errors", "seed", "timings"] {
            assert!(json.get(key).is_some());
        }
        assert!(grid_path_lambda_m(x.view(), y.view(), kernel, &[], &ms, 1, Metric::Rmse).is_err());
    }

    #[test]
    fn one_by_one_surface_is_single_fit() {
        let kernel = KernelSpec::Gaussian { sigma: 0.7 };
        let x = random_matrix(50, 2, 8);
        let y = random_matrix(50, 1, 9);
        let surf = grid_path_lambda_m(x.view(), y.view(), kernel, &[0.01], &[6], 2, Metric::Rmse).unwrap();
        let setup = SurfaceSetup::new(x.view(), y.view(), 6, 2).unwrap();
        let model = NystromModel::fit(kernel, setup.x_train.view(), setup.y_train.view(), &setup.center_order, 0.01).unwrap();
        let e = rmse(model.predict(setup.x_val.view()).unwrap().view(), setup.y_val.view());
        assert!((surf.errors[0][0] - e).abs() < 1e-8);
        assert_eq!(surf.best().unwrap().0.m, Some(6));
    }
}
