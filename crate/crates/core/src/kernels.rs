//! Positive-definite kernels and Gram matrix assembly.
//!
//! Samples are rows: an `n x d` input matrix holds `n` points in `d`
//! dimensions.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Result};

/// Kernel family and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `xᵀx'`
    Linear,
    /// `(xᵀx' + 1)^degree`
    Polynomial { degree: u32 },
    /// `exp(-‖x - x'‖² / (2σ²))`
    Gaussian { sigma: f64 },
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let spec = KernelSpec::Gaussian { sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn polynomial(degree: u32) -> Result<Self> {
        let spec = KernelSpec::Polynomial { degree };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree } if degree >= 1 => Ok(()),
            KernelSpec::Polynomial { degree } => param_err(format!("polynomial degree must be >= 1, got {degree}")),
            KernelSpec::Gaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            KernelSpec::Gaussian { sigma } => param_err(format!("gaussian bandwidth must be > 0, got {sigma}")),
        }
    }

    /// Kernel value from the inner product and squared norms of the two points.
    #[inline]
    fn eval_parts(&self, dot: f64, sq_a: f64, sq_b: f64) -> f64 {
        match *self {
            KernelSpec::Linear => dot,
            KernelSpec::Polynomial { degree } => (dot + 1.0).powi(degree as i32),
            KernelSpec::Gaussian { sigma } => {
                let dist = (sq_a + sq_b - 2.0 * dot).max(0.0);
                (-dist / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub fn eval(&self, x: ArrayView1<f64>, x2: ArrayView1<f64>) -> Result<f64> {
        if x.len() != x2.len() {
            return shape_err(format!("kernel arguments have dimensions {} and {}", x.len(), x2.len()));
        }
        Ok(self.eval_parts(x.dot(&x2), x.dot(&x), x2.dot(&x2)))
    }

    /// Sup of `K(x, x)` over the rows of `x`.
    pub fn max_diagonal(&self, x: ArrayView2<f64>) -> f64 {
        x.axis_iter(Axis(0))
            .map(|row| {
                let sq = row.dot(&row);
                self.eval_parts(sq, sq, sq)
            })
            .fold(0.0, f64::max)
    }

    /// `n x n` kernel matrix of the rows of `x`; identical to `cross_gram(x, x)`.
    pub fn gram(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.assemble(x, x)
    }

    /// `n x m` matrix with entries `K(x_i, c_j)`.
    pub fn cross_gram(&self, x: ArrayView2<f64>, c: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != c.ncols() {
            return shape_err(format!("inputs have {} features, centers have {}", x.ncols(), c.ncols()));
        }
        Ok(self.assemble(x, c))
    }

    // Entry-wise assembly: each entry depends only on (x_i, c_j), so the
    // result is exactly symmetric when c == x.
    fn assemble(&self, x: ArrayView2<f64>, c: ArrayView2<f64>) -> Array2<f64> {
        let sq_x: Array1<f64> = x.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
        let sq_c: Array1<f64> = c.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
        let mut k = Array2::zeros((x.nrows(), c.nrows()));
        k.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(i, mut row)| {
            let xi = x.row(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.eval_parts(xi.dot(&c.row(j)), sq_x[i], sq_c[j]);
            }
        });
        k
    }

    /// Column `K(x_i, c)` for a single point `c`.
    pub fn column(&self, x: ArrayView2<f64>, c: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.ncols() != c.len() {
            return shape_err(format!("inputs have {} features, point has {}", x.ncols(), c.len()));
        }
        let sq_c = c.dot(&c);
        Ok(x.axis_iter(Axis(0)).map(|row| self.eval_parts(row.dot(&c), row.dot(&row), sq_c)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh_sym;
    use crate::testutil::random_matrix;
    use ndarray::array;

    #[test]
    fn eval_examples() {
        let g = KernelSpec::gaussian(0.7).unwrap();
        let x = array![0.3, -1.2];
        assert_eq!(g.eval(x.view(), x.view()).unwrap(), 1.0);

        // ‖x - x2‖² = 2σ²  →  e⁻¹
        let sigma = 1.5;
        let g = KernelSpec::gaussian(sigma).unwrap();
        let x2 = array![0.3 + (2.0f64).sqrt() * sigma, -1.2];
        assert!((g.eval(x.view(), x2.view()).unwrap() - (-1.0f64).exp()).abs() < 1e-14);

        let p = KernelSpec::polynomial(2).unwrap();
        assert_eq!(p.eval(array![1.0, 0.0].view(), array![1.0, 0.0].view()).unwrap(), 4.0);

        assert!(g.eval(array![1.0].view(), array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
        assert!(KernelSpec::polynomial(0).is_err());
    }

    #[test]
    fn gram_examples() {
        let g = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(g.gram(array![[0.4, 2.0]].view()), array![[1.0]]);

        let x = random_matrix(6, 3, 1);
        let lin = KernelSpec::Linear.gram(x.view());
        assert!(crate::linalg::rel_diff(lin.view(), x.dot(&x.t()).view()) < 1e-14);

        let x = random_matrix(25, 4, 2);
        let k = g.gram(x.view());
        assert!(k.diag().iter().all(|&v| v == 1.0));
        assert!(k.iter().all(|&v| v > 0.0 && v <= 1.0));
        let e = eigh_sym(k.view()).unwrap();
        assert!(e.min_eigval() >= -1e-10);
    }

    #[test]
    fn cross_gram_matches_naive_loop() {
        let x = random_matrix(7, 3, 3);
        let c = random_matrix(4, 3, 4);
        for spec in [KernelSpec::Linear, KernelSpec::Polynomial { degree: 3 }, KernelSpec::Gaussian { sigma: 0.8 }] {
            let k = spec.cross_gram(x.view(), c.view()).unwrap();
            for i in 0..7 {
                for j in 0..4 {
                    let want = spec.eval(x.row(i), c.row(j)).unwrap();
                    assert!((k[[i, j]] - want).abs() < 1e-14);
                }
            }
            assert_eq!(spec.cross_gram(x.view(), x.view()).unwrap(), spec.gram(x.view()));
            let col = spec.cross_gram(x.view(), c.slice(ndarray::s![0..1, ..])).unwrap();
            assert_eq!(col.column(0), spec.column(x.view(), c.row(0)).unwrap());
        }
        assert!(KernelSpec::Linear.cross_gram(x.view(), random_matrix(2, 2, 0).view()).is_err());
    }
}
