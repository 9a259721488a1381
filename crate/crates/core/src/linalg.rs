//! Dense linear-algebra kernel shared by every estimator.
//!
//! Matrices are `ndarray` values. The symmetric eigensolver, SVD and
//! pivoted QR are delegated to `nalgebra`; the Cholesky factor and its
//! rank-one modifications are implemented here because the incremental
//! paths depend on their exact behaviour (bordered factors with a zero
//! trailing diagonal, downdates that must fail loudly).

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Relative threshold below which singular values / eigenvalues count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Relative tolerance used for the symmetry precondition.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub(crate) fn to_nalgebra(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

#[cfg(test)]
pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

pub fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Frobenius norm of `a - b` divided by that of `b` (absolute when `b` is zero).
pub fn rel_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let diff = frobenius((&a - &b).view());
    let scale = frobenius(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

pub(crate) fn check_square(m: ArrayView2<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return shape_err(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}

pub(crate) fn check_symmetric(m: ArrayView2<f64>, what: &str) -> Result<usize> {
    let n = check_square(m, what)?;
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[[i, j]] - m[[j, i]]).abs() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                return shape_err(format!("{what} is not symmetric at ({i}, {j})"));
            }
        }
    }
    Ok(n)
}

/// Eigendecomposition `M = Q diag(Σ) Qᵀ` of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigvecs: Array2<f64>,
    pub eigvals: Array1<f64>,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigvals.len()
    }

    pub fn max_eigval(&self) -> f64 {
        self.eigvals.first().copied().unwrap_or(0.0)
    }

    pub fn min_eigval(&self) -> f64 {
        self.eigvals.last().copied().unwrap_or(0.0)
    }

    /// `Q diag(f(σ)) Qᵀ`.
    pub fn map_reconstruct(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let mut scaled = self.eigvecs.clone();
        for (mut col, &s) in scaled.axis_iter_mut(Axis(1)).zip(self.eigvals.iter()) {
            col *= f(s);
        }
        scaled.dot(&self.eigvecs.t())
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.map_reconstruct(|s| s)
    }

    /// Number of eigenvalues above `RANK_TOL * σ_max`.
    pub fn numerical_rank(&self) -> usize {
        let cut = RANK_TOL * self.max_eigval().max(0.0);
        self.eigvals.iter().filter(|&&s| s > cut).count()
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Negative eigenvalues whose magnitude is below `1e-12 · σ_max` are clamped
/// to zero so that PSD kernel matrices stay PSD after round-off.
pub fn eigh_sym(m: ArrayView2<f64>) -> Result<SymEig> {
    let n = check_symmetric(m, "eigh_sym input")?;
    if n == 0 {
        return Ok(SymEig { eigvecs: Array2::zeros((0, 0)), eigvals: Array1::zeros(0) });
    }
    // Symmetrize exactly so tiny asymmetries do not leak into the solver.
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let max_ev = eig.eigenvalues[order[0]];
    let clamp = RANK_TOL * max_ev.abs();
    let eigvals = Array1::from_iter(order.iter().map(|&k| {
        let v = eig.eigenvalues[k];
        if v < 0.0 && -v < clamp {
            0.0
        } else {
            v
        }
    }));
    let eigvecs = Array2::from_shape_fn((n, n), |(i, j)| eig.eigenvectors[(i, order[j])]);
    Ok(SymEig { eigvecs, eigvals })
}

/// Upper-triangular Cholesky factor `R` with `RᵀR = A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholFactor {
    r: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateSign {
    Plus,
    Minus,
}

impl CholFactor {
    /// Wraps an existing upper-triangular matrix; the lower triangle is ignored.
    pub fn from_upper(r: Array2<f64>) -> Result<Self> {
        check_square(r.view(), "Cholesky factor")?;
        let mut r = if r.is_standard_layout() { r } else { r.as_standard_layout().into_owned() };
        let p = r.nrows();
        for i in 0..p {
            for j in 0..i {
                r[[i, j]] = 0.0;
            }
        }
        Ok(Self { r })
    }

    /// `sqrt(c) · I`.
    pub fn scaled_identity(p: usize, c: f64) -> Self {
        Self { r: Array2::eye(p) * c.sqrt() }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.r
    }

    /// `RᵀR`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.r.t().dot(&self.r)
    }

    /// Returns the factor padded with a zero last row and column.
    pub fn bordered(&self) -> Self {
        let p = self.dim();
        let mut r = Array2::zeros((p + 1, p + 1));
        r.slice_mut(s![..p, ..p]).assign(&self.r);
        Self { r }
    }

    /// In-place rank-one modification `RᵀR ± xxᵀ`.
    ///
    /// The update uses Givens rotations and tolerates zero diagonal entries
    /// (as produced by [`CholFactor::bordered`]). The downdate follows the
    /// LINPACK `dchdd` recurrence and fails if the result is not positive
    /// definite, leaving `self` unspecified in that case.
    pub fn rank_one_in_place(&mut self, x: ArrayView1<f64>, sign: UpdateSign) -> Result<()> {
        let p = self.dim();
        if x.len() != p {
            return shape_err(format!("update vector has length {}, factor is {p}x{p}", x.len()));
        }
        let mut w = x.to_vec();
        let r = &mut self.r;
        match sign {
            UpdateSign::Plus => {
                for k in 0..p {
                    let mut row = r.row_mut(k);
                    let rk = row.as_slice_mut().expect("factor rows are contiguous");
                    let wk = w[k];
                    let rad = rk[k].hypot(wk);
                    if rad == 0.0 {
                        continue;
                    }
                    let (c, s) = (rk[k] / rad, wk / rad);
                    rk[k] = rad;
                    for (t, wj) in rk[k + 1..].iter_mut().zip(&mut w[k + 1..]) {
                        let old = *t;
                        *t = c * old + s * *wj;
                        *wj = c * *wj - s * old;
                    }
                }
                // Keep the diagonal positive if a rotation flipped a sign.
                for k in 0..p {
                    if r[[k, k]] < 0.0 {
                        r.row_mut(k).mapv_inplace(|v| -v);
                    }
                }
            }
            UpdateSign::Minus => {
                for k in 0..p {
                    let mut row = r.row_mut(k);
                    let rk = row.as_slice_mut().expect("factor rows are contiguous");
                    let rkk = rk[k];
                    let wk = w[k];
                    let arg = (rkk - wk) * (rkk + wk);
                    if !(arg > 0.0) || rkk <= 0.0 {
                        return Err(Error::NotPositiveDefinite { pivot: k });
                    }
                    let rad = arg.sqrt();
                    let (c, s) = (rad / rkk, wk / rkk);
                    rk[k] = rad;
                    for (t, wj) in rk[k + 1..].iter_mut().zip(&mut w[k + 1..]) {
                        let updated = (*t - s * *wj) / c;
                        *t = updated;
                        *wj = c * *wj - s * updated;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `R X = b` (or `Rᵀ X = b` when `transpose`).
    pub fn tri_solve(&self, b: ArrayView2<f64>, transpose: bool) -> Result<Array2<f64>> {
        let p = self.dim();
        if b.nrows() != p {
            return shape_err(format!("rhs has {} rows, factor is {p}x{p}", b.nrows()));
        }
        for i in 0..p {
            if self.r[[i, i]] == 0.0 {
                return Err(Error::Singular { index: i });
            }
        }
        let mut x = b.to_owned();
        let r = &self.r;
        for mut col in x.axis_iter_mut(Axis(1)) {
            let mut v = col.to_vec();
            if transpose {
                // Rᵀ is lower triangular: forward substitution, sweeping rows of R.
                for i in 0..p {
                    let row = r.row(i);
                    let ri = row.as_slice().expect("factor rows are contiguous");
                    v[i] /= ri[i];
                    let vi = v[i];
                    for (vj, &rij) in v[i + 1..].iter_mut().zip(&ri[i + 1..]) {
                        *vj -= rij * vi;
                    }
                }
            } else {
                for i in (0..p).rev() {
                    let row = r.row(i);
                    let ri = row.as_slice().expect("factor rows are contiguous");
                    let acc: f64 = ri[i + 1..].iter().zip(&v[i + 1..]).map(|(a, b)| a * b).sum();
                    v[i] = (v[i] - acc) / ri[i];
                }
            }
            col.assign(&Array1::from(v));
        }
        Ok(x)
    }

    /// Solves `RᵀR X = b` with the two triangular passes.
    pub fn solve(&self, b: ArrayView2<f64>) -> Result<Array2<f64>> {
        let half = self.tri_solve(b, true)?;
        self.tri_solve(half.view(), false)
    }
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Only the upper triangle of `a` is read.
pub fn cholesky(a: ArrayView2<f64>) -> Result<CholFactor> {
    let p = check_square(a, "cholesky input")?;
    let mut r = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= r[[k, j]] * r[[k, j]];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let rjj = diag.sqrt();
        r[[j, j]] = rjj;
        for i in (j + 1)..p {
            let mut acc = a[[j, i]];
            for k in 0..j {
                acc -= r[[k, j]] * r[[k, i]];
            }
            r[[j, i]] = acc / rjj;
        }
    }
    Ok(CholFactor { r })
}

/// Returns a new factor of `RᵀR ± xxᵀ`.
pub fn cholup(r: &CholFactor, x: ArrayView1<f64>, sign: UpdateSign) -> Result<CholFactor> {
    let mut out = r.clone();
    out.rank_one_in_place(x, sign)?;
    Ok(out)
}

/// Free-function form of [`CholFactor::tri_solve`].
pub fn tri_solve(r: &CholFactor, b: ArrayView2<f64>, transpose: bool) -> Result<Array2<f64>> {
    r.tri_solve(b, transpose)
}

/// Economic QR `A = S D` with `SᵀS = I_k`, `k` the numerical rank of `A`.
///
/// Computed from a column-pivoted Householder QR; `D = R_k Pᵀ` is upper
/// trapezoidal in the pivoted column order.
#[derive(Debug, Clone)]
pub struct EconomicQr {
    pub s: Array2<f64>,
    pub d: Array2<f64>,
    pub rank: usize,
}

/// Singular values in descending order.
pub fn singular_values(a: ArrayView2<f64>) -> Array1<f64> {
    if a.is_empty() {
        return Array1::zeros(0);
    }
    let svd = nalgebra::SVD::new(to_nalgebra(a), false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Array1::from(sv)
}

pub fn numerical_rank(a: ArrayView2<f64>) -> usize {
    let sv = singular_values(a);
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().filter(|&&s| s > RANK_TOL * top).count(),
        _ => 0,
    }
}

pub fn economic_qr(a: ArrayView2<f64>) -> Result<EconomicQr> {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return shape_err("economic_qr of an empty matrix");
    }
    let rank = numerical_rank(a);
    if rank == 0 {
        return Ok(EconomicQr { s: Array2::zeros((rows, 0)), d: Array2::zeros((0, cols)), rank });
    }
    let qr = to_nalgebra(a).col_piv_qr();
    let q = qr.q();
    let mut r_p = qr.r();
    // r_p = R (min(rows, cols) x cols), pivoted; undo the permutation on columns.
    qr.p().inv_permute_columns(&mut r_p);
    let s = Array2::from_shape_fn((rows, rank), |(i, j)| q[(i, j)]);
    let d = Array2::from_shape_fn((rank, cols), |(i, j)| r_p[(i, j)]);
    Ok(EconomicQr { s, d, rank })
}

/// Pseudo-inverse solution `M^† B` for symmetric PSD `M`, thresholded at `RANK_TOL`.
pub fn pinv_solve_sym(eig: &SymEig, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if b.nrows() != eig.dim() {
        return shape_err(format!("rhs has {} rows, matrix is {}", b.nrows(), eig.dim()));
    }
    let cut = RANK_TOL * eig.max_eigval().max(0.0);
    let proj = eig.eigvecs.t().dot(&b);
    let mut scaled = proj;
    for (mut row, &s) in scaled.axis_iter_mut(Axis(0)).zip(eig.eigvals.iter()) {
        if s > cut {
            row /= s;
        } else {
            row.fill(0.0);
        }
    }
    Ok(eig.eigvecs.dot(&scaled))
}

/// Solves the symmetric positive-definite system `A X = B` by Cholesky.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    cholesky(a)?.solve(b)
}
