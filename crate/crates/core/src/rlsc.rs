//! Recursive regularized least-squares classifier with class recoding.
//!
//! The state keeps the Cholesky factor of `A_k = X_kᵀX_k + λI` and
//! `b_k = X_kᵀY_k` (one-hot targets). Each example costs one rank-one update.
//! Weights are `W_k = A_k⁻¹ b_k Γ_k^α` with `Γ_k = k·diag(counts)⁻¹`, which
//! rescales each class column by `(k / count)^α`. New classes may appear at
//! any time as long as labels stay contiguous.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::exact::PrimalModel;
use crate::linalg::{cholesky, rel_diff, solve_spd, CholFactor, UpdateSign};
use crate::selection::argmax;

/// Updates between two drift checks of the factor.
pub const DRIFT_CHECK_INTERVAL: usize = 512;
const DRIFT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlscState {
    r: CholFactor,
    b: Array2<f64>,
    counts: Vec<usize>,
    k: usize,
    lambda: f64,
    alpha_exp: f64,
    // Running X_kᵀX_k for the drift check.
    gram: Array2<f64>,
    since_check: usize,
    refactorizations: usize,
}

impl RlscState {
    /// `R_0 = √λ I_d`, no classes yet.
    pub fn init(d: usize, lambda: f64, alpha_exp: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return param_err(format!("lambda must be > 0, got {lambda}"));
        }
        if !(0.0..=1.0).contains(&alpha_exp) {
            return param_err(format!("recoding exponent must be in [0, 1], got {alpha_exp}"));
        }
        if d == 0 {
            return param_err("input dimension must be >= 1");
        }
        Ok(Self {
            r: CholFactor::scaled_identity(d, lambda),
            b: Array2::zeros((d, 0)),
            counts: Vec::new(),
            k: 0,
            lambda,
            alpha_exp,
            gram: Array2::zeros((d, d)),
            since_check: 0,
            refactorizations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.r.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_examples(&self) -> usize {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha_exp(&self) -> f64 {
        self.alpha_exp
    }

    pub fn set_alpha_exp(&mut self, alpha_exp: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha_exp) {
            return param_err(format!("recoding exponent must be in [0, 1], got {alpha_exp}"));
        }
        self.alpha_exp = alpha_exp;
        Ok(())
    }

    pub fn factor(&self) -> &CholFactor {
        &self.r
    }

    pub fn b(&self) -> ArrayView2<'_, f64> {
        self.b.view()
    }

    /// Number of drift checks that replaced the factor.
    pub fn refactorizations(&self) -> usize {
        self.refactorizations
    }

    /// Adds one example with a 1-based label in `1..=T+1`.
    pub fn update(&mut self, x: ArrayView1<f64>, label: usize) -> Result<()> {
        if x.len() != self.dim() {
            return shape_err(format!("example has {} features, model expects {}", x.len(), self.dim()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("example has non-finite entries".into()));
        }
        let t = self.num_classes();
        if label == 0 || label > t + 1 {
            return Err(Error::NonContiguousLabel { label, known: t });
        }
        if label == t + 1 {
            self.b.push_column(Array1::zeros(self.dim()).view()).expect("column length matches");
            self.counts.push(0);
        }
        self.counts[label - 1] += 1;
        self.k += 1;
        self.b.column_mut(label - 1).scaled_add(1.0, &x);
        self.r.rank_one_in_place(x, UpdateSign::Plus)?;
        let xc = x.view().insert_axis(Axis(1));
        ndarray::linalg::general_mat_mul(1.0, &xc, &xc.t(), 1.0, &mut self.gram);
        self.since_check += 1;
        if self.since_check >= DRIFT_CHECK_INTERVAL {
            self.drift_check()?;
        }
        Ok(())
    }

    /// Refactors `A_k` from the running Gram matrix and replaces the factor
    /// when the two disagree by more than a tight tolerance.
    pub fn drift_check(&mut self) -> Result<f64> {
        self.since_check = 0;
        let mut a = self.gram.clone();
        a.diag_mut().mapv_inplace(|v| v + self.lambda);
        let drift = rel_diff(self.r.reconstruct().view(), a.view());
        if drift > DRIFT_TOL {
            warn!("rlsc factor drifted by {drift:.3e}; refactorizing");
            self.r = cholesky(a.view())?;
            self.refactorizations += 1;
        }
        Ok(drift)
    }

    /// Recoding weights `(k / count_j)^α`.
    pub fn recoding(&self, alpha_exp: f64) -> Array1<f64> {
        self.counts.iter().map(|&c| (self.k as f64 / c as f64).powf(alpha_exp)).collect()
    }

    /// `A_k⁻¹ b_k`, the unrecoded weights.
    pub fn base_weights(&self) -> Result<Array2<f64>> {
        if self.num_classes() == 0 {
            return Ok(Array2::zeros((self.dim(), 0)));
        }
        self.r.solve(self.b.view())
    }

    /// `W_k = A_k⁻¹ b_k Γ_k^α` at the state's exponent.
    pub fn weights(&self) -> Result<Array2<f64>> {
        self.weights_with_alpha(self.alpha_exp)
    }

    pub fn weights_with_alpha(&self, alpha_exp: f64) -> Result<Array2<f64>> {
        let mut w = self.base_weights()?;
        for (mut col, g) in w.axis_iter_mut(Axis(1)).zip(self.recoding(alpha_exp)) {
            col *= g;
        }
        Ok(w)
    }

    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if self.num_classes() == 0 {
            return Err(Error::Untrained);
        }
        if x.ncols() != self.dim() {
            return shape_err(format!("inputs have {} features, model expects {}", x.ncols(), self.dim()));
        }
        Ok(x.dot(&self.weights()?))
    }

    /// 1-based class with the largest score; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize> {
        let s = self.scores(x.insert_axis(Axis(0)))?;
        Ok(argmax(s.row(0)) + 1)
    }

    pub fn predict_many(&self, x: ArrayView2<f64>) -> Result<Vec<usize>> {
        Ok(predict_labels(self.scores(x)?.view()))
    }

    /// Largest candidate exponent whose accuracy on the well-represented
    /// validation classes is at least the accuracy at `α = 0`.
    ///
    /// A class is well represented when it has at least `min_count`
    /// validation examples. Accuracy is the fraction of correct predictions
    /// over those examples.
    pub fn select_alpha(&self, candidates: &[f64], x_val: ArrayView2<f64>, labels_val: &[usize], min_count: usize) -> Result<f64> {
        if candidates.is_empty() {
            return Err(Error::Selection("no candidate exponents".into()));
        }
        if let Some(a) = candidates.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return param_err(format!("candidate exponent {a} outside [0, 1]"));
        }
        if x_val.nrows() != labels_val.len() {
            return shape_err("validation inputs and labels differ in length");
        }
        if self.num_classes() == 0 {
            return Err(Error::Untrained);
        }
        let mut val_counts = vec![0usize; self.num_classes()];
        for &l in labels_val {
            if l >= 1 && l <= val_counts.len() {
                val_counts[l - 1] += 1;
            }
        }
        let keep: Vec<usize> = (0..labels_val.len())
            .filter(|&i| {
                let l = labels_val[i];
                l >= 1 && l <= val_counts.len() && val_counts[l - 1] >= min_count
            })
            .collect();
        if keep.is_empty() {
            return Err(Error::Selection(format!("no validation class has at least {min_count} examples")));
        }
        let xs = x_val.select(Axis(0), &keep);
        let labels: Vec<usize> = keep.iter().map(|&i| labels_val[i]).collect();
        let base = xs.dot(&self.base_weights()?);
        let accuracy = |alpha: f64| {
            let mut s = base.clone();
            for (mut col, g) in s.axis_iter_mut(Axis(1)).zip(self.recoding(alpha)) {
                col *= g;
            }
            let pred = predict_labels(s.view());
            pred.iter().zip(&labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
        };
        let reference = accuracy(0.0);
        let mut best: Option<f64> = None;
        for &a in candidates {
            if accuracy(a) >= reference && best.is_none_or(|b| a > b) {
                best = Some(a);
            }
        }
        Ok(best.unwrap_or(0.0))
    }
}

/// Row-wise argmax labels (1-based).
pub fn predict_labels(scores: ArrayView2<f64>) -> Vec<usize> {
    scores.axis_iter(Axis(0)).map(|r| argmax(r) + 1).collect()
}

/// One-hot `n x T` targets from 1-based labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((labels.len(), classes));
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 || l > classes {
            return Err(Error::NonContiguousLabel { label: l, known: classes });
        }
        y[[i, l - 1]] = 1.0;
    }
    Ok(y)
}

/// Batch weighted least squares `(XᵀΣX + λI) W = XᵀΣY`, where example `i`
/// gets weight `class_weights[c_i]` and `c_i` is its one-hot class.
pub fn batch_rebalanced_fit(x: ArrayView2<f64>, y_indicator: ArrayView2<f64>, lambda: f64, class_weights: &[f64]) -> Result<PrimalModel> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    if x.nrows() != y_indicator.nrows() {
        return shape_err(format!("X has {} rows, Y has {}", x.nrows(), y_indicator.nrows()));
    }
    if class_weights.len() != y_indicator.ncols() {
        return shape_err(format!("{} class weights for {} classes", class_weights.len(), y_indicator.ncols()));
    }
    if class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return param_err("class weights must be positive");
    }
    let sw: Array1<f64> = y_indicator.axis_iter(Axis(0)).map(|r| class_weights[argmax(r)]).collect();
    let xw = &x * &sw.view().insert_axis(Axis(1));
    let mut a = xw.t().dot(&x);
    a.diag_mut().mapv_inplace(|v| v + lambda);
    let rhs = xw.t().dot(&y_indicator);
    Ok(PrimalModel { weights: solve_spd(a.view(), rhs.view())? })
}
