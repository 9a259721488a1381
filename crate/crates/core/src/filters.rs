//! Spectral filters `g(σ)` and their application `G(K) Y = Q g(Σ) Qᵀ Y`.

use log::warn;
use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::linalg::{check_square, SymEig, RANK_TOL};

/// Filter identity together with its regularization parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FilterSpec {
    /// `1 / (σ + nλ)`
    Tikhonov { lambda: f64 },
    /// `1/σ` for `σ ≥ nλ`, else 0.
    Tsvd { lambda: f64 },
    /// `η Σ_{i<t} (1 - ησ)^i`
    Landweber { eta: f64, iterations: usize },
}

impl FilterSpec {
    pub fn tikhonov(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return param_err(format!("tikhonov lambda must be > 0, got {lambda}"));
        }
        Ok(FilterSpec::Tikhonov { lambda })
    }

    pub fn tsvd(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return param_err(format!("tsvd lambda must be >= 0, got {lambda}"));
        }
        Ok(FilterSpec::Tsvd { lambda })
    }

    pub fn landweber(eta: f64, iterations: usize) -> Result<Self> {
        if !(eta > 0.0) {
            return param_err(format!("landweber step must be > 0, got {eta}"));
        }
        if iterations == 0 {
            return param_err("landweber needs at least one iteration");
        }
        Ok(FilterSpec::Landweber { eta, iterations })
    }
}

/// Scalar filter value for eigenvalue `sigma` of an `n`-sample kernel matrix.
pub fn scalar_filter(spec: &FilterSpec, sigma: f64, n: usize) -> Result<f64> {
    let n = n as f64;
    match *spec {
        FilterSpec::Tikhonov { lambda } => {
            let denom = sigma + n * lambda;
            if denom <= 0.0 {
                return Err(Error::SingularFilter(format!("sigma + n*lambda = {denom}")));
            }
            Ok(1.0 / denom)
        }
        FilterSpec::Tsvd { lambda } => Ok(if sigma > 0.0 && sigma >= n * lambda { 1.0 / sigma } else { 0.0 }),
        FilterSpec::Landweber { eta, iterations } => {
            let contraction = 1.0 - eta * sigma;
            let mut acc = 0.0;
            for _ in 0..iterations {
                acc = acc * contraction + 1.0;
            }
            Ok(eta * acc)
        }
    }
}

/// `α = Q g(Σ) Qᵀ Y` for the eigendecomposition of an `n x n` kernel matrix.
pub fn apply_filter(k: &SymEig, y: ArrayView2<f64>, spec: &FilterSpec) -> Result<Array2<f64>> {
    let n = k.dim();
    if y.nrows() != n {
        return shape_err(format!("targets have {} rows, kernel is {n}x{n}", y.nrows()));
    }
    let zero_cut = RANK_TOL * k.max_eigval().max(0.0);
    let mut coeffs = k.eigvecs.t().dot(&y);
    for (mut row, &sigma) in coeffs.axis_iter_mut(Axis(0)).zip(k.eigvals.iter()) {
        let sigma = sigma.max(0.0);
        let g = match spec {
            FilterSpec::Tsvd { .. } if sigma <= zero_cut => 0.0,
            _ => scalar_filter(spec, sigma, n)?,
        };
        row *= g;
    }
    Ok(k.eigvecs.dot(&coeffs))
}

/// Largest eigenvalue estimate of a PSD matrix by power iteration.
pub(crate) fn power_iteration(m: ArrayView2<f64>, steps: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    // Deterministic, non-degenerate start vector.
    let mut v = ndarray::Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v /= v.dot(&v).sqrt();
    let mut est = 0.0;
    for _ in 0..steps {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        est = v.dot(&w);
        v = w / norm;
    }
    est.max(m.dot(&v).dot(&v))
}

/// Step size for Landweber: `2/n` when `σ_max(K) < n`, otherwise `1/σ_max(K)`.
pub fn default_landweber_step(k: ArrayView2<f64>) -> f64 {
    let n = k.nrows() as f64;
    let top = power_iteration(k, 200);
    if top < n {
        2.0 / n
    } else {
        1.0 / top
    }
}

/// Runs `α_i = α_{i-1} + η (Y - K α_{i-1})` from `α_0 = 0`, returning `α_1 .. α_{t_max}`.
pub fn landweber_iterate(k: ArrayView2<f64>, y: ArrayView2<f64>, eta: f64, t_max: usize) -> Result<Vec<Array2<f64>>> {
    let n = check_square(k, "kernel matrix")?;
    if y.nrows() != n {
        return shape_err(format!("targets have {} rows, kernel is {n}x{n}", y.nrows()));
    }
    if !(eta > 0.0) {
        return param_err(format!("landweber step must be > 0, got {eta}"));
    }
    let top = power_iteration(k, 100);
    if eta * top >= 2.0 {
        warn!("landweber step {eta} violates eta < 2/sigma_max = {}; iteration may diverge", 2.0 / top);
    }
    let mut path = Vec::with_capacity(t_max);
    let mut alpha = Array2::<f64>::zeros(y.raw_dim());
    for _ in 0..t_max {
        let residual = &y - &k.dot(&alpha);
        alpha.scaled_add(eta, &residual);
        path.push(alpha.clone());
    }
    Ok(path)
}

/// Condition number `(σ_max + nλ) / (σ_min + nλ)`; `+inf` when the denominator vanishes.
pub fn condition_number(k: &SymEig, lambda: f64, n: usize) -> f64 {
    let shift = n as f64 * lambda;
    let denom = k.min_eigval().max(0.0) + shift;
    if denom <= 0.0 {
        f64::INFINITY
    } else {
        (k.max_eigval() + shift) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigh_sym, rel_diff, solve_spd};
    use crate::testutil::{random_matrix, random_pd};

    #[test]
    fn scalar_filter_examples() {
        let t = FilterSpec::tikhonov(0.1).unwrap();
        assert!((scalar_filter(&t, 1.0, 10).unwrap() - 0.5).abs() < 1e-15);

        let c = FilterSpec::tsvd(0.1).unwrap();
        assert_eq!(scalar_filter(&c, 0.5, 10).unwrap(), 0.0);
        assert_eq!(scalar_filter(&c, 1.0, 10).unwrap(), 1.0, "boundary sigma = n*lambda is kept");
        assert_eq!(scalar_filter(&FilterSpec::Tsvd { lambda: 0.0 }, 0.0, 10).unwrap(), 0.0);

        let l = FilterSpec::landweber(0.5, 2).unwrap();
        assert!((scalar_filter(&l, 1.0, 10).unwrap() - 0.75).abs() < 1e-15);

        let zero = FilterSpec::Tikhonov { lambda: 0.0 };
        assert!(matches!(scalar_filter(&zero, 0.0, 4), Err(Error::SingularFilter(_))));
    }

    #[test]
    fn filters_tend_to_inverse() {
        for sigma in [0.1, 1.0, 10.0] {
            let t = scalar_filter(&FilterSpec::Tikhonov { lambda: 1e-12 }, sigma, 1).unwrap();
            let c = scalar_filter(&FilterSpec::Tsvd { lambda: 1e-12 }, sigma, 1).unwrap();
            let eta = 1.0 / 10.0;
            let l = scalar_filter(&FilterSpec::Landweber { eta, iterations: 5000 }, sigma, 1).unwrap();
            for g in [t, c, l] {
                assert!((g - 1.0 / sigma).abs() < 1e-6 * (1.0 / sigma).max(1.0), "sigma={sigma} g={g}");
            }
        }
    }

    #[test]
    fn bad_specs() {
        assert!(FilterSpec::tikhonov(0.0).is_err());
        assert!(FilterSpec::tsvd(-1.0).is_err());
        assert!(FilterSpec::landweber(0.0, 3).is_err());
        assert!(FilterSpec::landweber(0.1, 0).is_err());
    }

    #[test]
    fn identity_kernel_tikhonov() {
        let n = 6;
        let y = random_matrix(n, 2, 1);
        let lambda = 0.05;
        let e = eigh_sym(Array2::<f64>::eye(n).view()).unwrap();
        let alpha = apply_filter(&e, y.view(), &FilterSpec::tikhonov(lambda).unwrap()).unwrap();
        let want = &y / (1.0 + n as f64 * lambda);
        assert!(rel_diff(alpha.view(), want.view()) < 1e-14);
    }

    #[test]
    fn tsvd_without_truncation_is_inverse() {
        let k = random_pd(8, 2);
        let y = random_matrix(8, 1, 3);
        let e = eigh_sym(k.view()).unwrap();
        let lambda = 0.5 * e.min_eigval() / 8.0;
        let alpha = apply_filter(&e, y.view(), &FilterSpec::tsvd(lambda).unwrap()).unwrap();
        let direct = solve_spd(k.view(), y.view()).unwrap();
        assert!(rel_diff(alpha.view(), direct.view()) < 1e-9);
    }

    #[test]
    fn tikhonov_filter_matches_cholesky_solve() {
        let n = 12;
        let k = random_pd(n, 4);
        let y = random_matrix(n, 3, 5);
        let lambda = 0.01;
        let e = eigh_sym(k.view()).unwrap();
        let alpha = apply_filter(&e, y.view(), &FilterSpec::tikhonov(lambda).unwrap()).unwrap();
        let shifted = &k + &(Array2::<f64>::eye(n) * (n as f64 * lambda));
        let direct = solve_spd(shifted.view(), y.view()).unwrap();
        assert!(rel_diff(alpha.view(), direct.view()) < 1e-10);
    }

    #[test]
    fn landweber_examples() {
        let y = random_matrix(4, 2, 6);
        let k = random_pd(4, 7);
        let path = landweber_iterate(k.view(), y.view(), 0.01, 1).unwrap();
        assert!(rel_diff(path[0].view(), (&y * 0.01).view()) < 1e-15);

        let path = landweber_iterate(Array2::<f64>::eye(4).view(), y.view(), 1.0, 5).unwrap();
        for alpha in &path {
            assert_eq!(alpha, &y);
        }
        assert!(landweber_iterate(random_matrix(3, 4, 0).view(), y.view(), 0.1, 2).is_err());
    }

    #[test]
    fn landweber_path_matches_closed_form() {
        let n = 15;
        let a = random_matrix(n, n, 8);
        let k = a.dot(&a.t()) / n as f64;
        let y = random_matrix(n, 2, 9);
        let e = eigh_sym(k.view()).unwrap();
        let eta = 1.0 / e.max_eigval();
        let path = landweber_iterate(k.view(), y.view(), eta, 20).unwrap();
        for (i, alpha) in path.iter().enumerate() {
            let spec = FilterSpec::landweber(eta, i + 1).unwrap();
            let closed = apply_filter(&e, y.view(), &spec).unwrap();
            assert!(rel_diff(alpha.view(), closed.view()) < 1e-8, "t={}", i + 1);
        }
    }

    #[test]
    fn condition_number_examples() {
        let e = eigh_sym(Array2::<f64>::eye(3).view()).unwrap();
        for lambda in [0.0, 0.1, 10.0] {
            assert!((condition_number(&e, lambda, 3) - 1.0).abs() < 1e-15);
        }
        let e = eigh_sym(Array2::from_diag(&ndarray::array![4.0, 0.0]).view()).unwrap();
        assert!((condition_number(&e, 0.5, 2) - 5.0).abs() < 1e-15);
        assert!(condition_number(&e, 0.0, 2).is_infinite());

        let e = eigh_sym(random_pd(10, 3).view()).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let lambda = 10f64.powf(-6.0 + 0.4 * i as f64);
            let kappa = condition_number(&e, lambda, 10);
            assert!(kappa <= prev);
            prev = kappa;
        }
    }

    #[test]
    fn default_step_rules() {
        let k = Array2::<f64>::eye(5) * 0.5;
        assert!((default_landweber_step(k.view()) - 2.0 / 5.0).abs() < 1e-12);
        let k = Array2::<f64>::eye(5) * 10.0;
        assert!((default_landweber_step(k.view()) - 0.1).abs() < 1e-9);
    }
}
