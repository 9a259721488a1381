//! Exact estimators: primal RLS, dual KRLS/KOLS and dual prediction.

use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};
use crate::filters::{apply_filter, FilterSpec};
use crate::kernels::KernelSpec;
use crate::linalg::{check_square, eigh_sym, pinv_solve_sym, solve_spd};

/// Anything that maps an `p x d` input matrix to `p x T` scores.
pub trait Predictor {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>>;
}

/// Linear weights over explicit features; no intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalModel {
    pub weights: Array2<f64>,
}

impl Predictor for PrimalModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.weights.nrows() {
            return shape_err(format!("inputs have {} features, model expects {}", x.ncols(), self.weights.nrows()));
        }
        Ok(x.dot(&self.weights))
    }
}

/// Coefficients over the training points, `f(x) = Σ_i K(x, x_i) α_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualModel {
    pub kernel: KernelSpec,
    pub train_inputs: Arc<Array2<f64>>,
    pub alpha: Array2<f64>,
}

impl DualModel {
    pub fn new(kernel: KernelSpec, train_inputs: Arc<Array2<f64>>, alpha: Array2<f64>) -> Result<Self> {
        if alpha.nrows() != train_inputs.nrows() {
            return shape_err(format!(
                "alpha has {} rows but {} training inputs are stored",
                alpha.nrows(),
                train_inputs.nrows()
            ));
        }
        Ok(Self { kernel, train_inputs, alpha })
    }

    /// Fits with any spectral filter on the Gram matrix of `x`.
    pub fn fit_filtered(kernel: KernelSpec, x: Arc<Array2<f64>>, y: ArrayView2<f64>, spec: &FilterSpec) -> Result<Self> {
        let k = kernel.gram(x.view());
        let alpha = filtered_fit(k.view(), y, spec)?;
        Self::new(kernel, x, alpha)
    }

    pub fn fit_krls(kernel: KernelSpec, x: Arc<Array2<f64>>, y: ArrayView2<f64>, lambda: f64) -> Result<Self> {
        let k = kernel.gram(x.view());
        let alpha = krls_fit(k.view(), y, lambda)?;
        Self::new(kernel, x, alpha)
    }

    pub fn fit_kols(kernel: KernelSpec, x: Arc<Array2<f64>>, y: ArrayView2<f64>) -> Result<Self> {
        let k = kernel.gram(x.view());
        let alpha = kols_fit(k.view(), y)?;
        Self::new(kernel, x, alpha)
    }
}

impl Predictor for DualModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        predict_dual(self, x)
    }
}

fn check_rows(what: &str, rows: usize, n: usize) -> Result<()> {
    if rows != n {
        return shape_err(format!("{what} has {rows} rows, expected {n}"));
    }
    Ok(())
}

/// Solves `(XᵀX + nλI) W = XᵀY`.
pub fn rls_fit_primal(x: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<PrimalModel> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    let (n, d) = x.dim();
    if n == 0 || d == 0 {
        return shape_err("empty design matrix");
    }
    check_rows("Y", y.nrows(), n)?;
    if d > n {
        // Same solution through the n x n system: W = Xᵀ(XXᵀ + nλI)⁻¹Y.
        let mut k = x.dot(&x.t());
        k.diag_mut().mapv_inplace(|v| v + n as f64 * lambda);
        return Ok(PrimalModel { weights: x.t().dot(&solve_spd(k.view(), y)?) });
    }
    let mut a = x.t().dot(&x);
    a.diag_mut().mapv_inplace(|v| v + n as f64 * lambda);
    let rhs = x.t().dot(&y);
    Ok(PrimalModel { weights: solve_spd(a.view(), rhs.view())? })
}

/// `α = (K + nλI)⁻¹ Y`, one shared Cholesky factorization for all outputs.
pub fn krls_fit(k: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    let n = check_square(k, "kernel matrix")?;
    check_rows("Y", y.nrows(), n)?;
    let mut shifted = k.to_owned();
    shifted.diag_mut().mapv_inplace(|v| v + n as f64 * lambda);
    solve_spd(shifted.view(), y)
}

/// Minimum-norm least squares `α = K^† Y`.
pub fn kols_fit(k: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = check_square(k, "kernel matrix")?;
    check_rows("Y", y.nrows(), n)?;
    let eig = eigh_sym(k)?;
    pinv_solve_sym(&eig, y)
}

/// `α = G(K) Y` for an arbitrary spectral filter.
pub fn filtered_fit(k: ArrayView2<f64>, y: ArrayView2<f64>, spec: &FilterSpec) -> Result<Array2<f64>> {
    let n = check_square(k, "kernel matrix")?;
    check_rows("Y", y.nrows(), n)?;
    let eig = eigh_sym(k)?;
    apply_filter(&eig, y, spec)
}

pub fn predict_dual(model: &DualModel, x_new: ArrayView2<f64>) -> Result<Array2<f64>> {
    let k = model.kernel.cross_gram(x_new, model.train_inputs.view())?;
    Ok(k.dot(&model.alpha))
}
