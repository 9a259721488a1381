//! Random Fourier features for the Gaussian kernel.
//!
//! `ψ(ω, x) = √2 cos(βᵀx + b)` with `β ~ N(0, I/σ²)` and `b ~ U[0, 2π)` is
//! an unbiased estimate of `exp(-‖x - x'‖² / 2σ²)`. A map with `D` features
//! scales each one by `√(2/D)`, so `φ(x)ᵀφ(x')` averages the `D` estimates.

use std::f64::consts::PI;

use log::debug;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray::parallel::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};
use crate::exact::{rls_fit_primal, Predictor, PrimalModel};
use crate::linalg::{cholesky, CholFactor};
use crate::nystrom::{bordered_update, FallbackEvent};

/// Parameters that fully determine a [`FeatureMap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapSpec {
    pub seed: u64,
    pub input_dim: usize,
    pub num_features: usize,
    pub sigma: f64,
    /// Feature count in the amplitude `√(2/count)` when it differs from
    /// `num_features` (maps truncated from a larger one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_count: Option<usize>,
}

/// Sampled frequencies and phases. Serializes as its [`FeatureMapSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureMapSpec", into = "FeatureMapSpec")]
pub struct FeatureMap {
    spec: FeatureMapSpec,
    omegas: Array2<f64>,
    phases: Array1<f64>,
    scale: f64,
}

impl TryFrom<FeatureMapSpec> for FeatureMap {
    type Error = Error;

    fn try_from(spec: FeatureMapSpec) -> Result<Self> {
        let fm = sample_features(spec.input_dim, spec.num_features, spec.sigma, spec.seed)?;
        match spec.scale_count {
            None => Ok(fm),
            Some(c) if c >= spec.num_features => {
                Ok(FeatureMap { spec, scale: (2.0 / c as f64).sqrt(), ..fm })
            }
            Some(c) => param_err(format!("scale count {c} is below the feature count {}", spec.num_features)),
        }
    }
}

impl From<FeatureMap> for FeatureMapSpec {
    fn from(fm: FeatureMap) -> Self {
        fm.spec
    }
}

/// Draws `D` frequencies `β_j ~ N(0, I/σ²)` and phases `b_j ~ U[0, 2π)`.
pub fn sample_features(d: usize, num_features: usize, sigma: f64, seed: u64) -> Result<FeatureMap> {
    if num_features == 0 || d == 0 {
        return param_err(format!("need D >= 1 and d >= 1, got D={num_features}, d={d}"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return param_err(format!("bandwidth must be positive, got {sigma}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / sigma).map_err(|e| Error::Parameter(e.to_string()))?;
    let uniform = Uniform::new(0.0, 2.0 * PI).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut omegas = Array2::zeros((num_features, d));
    let mut phases = Array1::zeros(num_features);
    for j in 0..num_features {
        for k in 0..d {
            omegas[[j, k]] = normal.sample(&mut rng);
        }
        phases[j] = uniform.sample(&mut rng);
    }
    Ok(FeatureMap {
        spec: FeatureMapSpec { seed, input_dim: d, num_features, sigma, scale_count: None },
        omegas,
        phases,
        scale: (2.0 / num_features as f64).sqrt(),
    })
}

impl FeatureMap {
    pub fn spec(&self) -> FeatureMapSpec {
        self.spec
    }

    pub fn omegas(&self) -> ArrayView2<'_, f64> {
        self.omegas.view()
    }

    pub fn phases(&self) -> ArrayView1<'_, f64> {
        self.phases.view()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn num_features(&self) -> usize {
        self.spec.num_features
    }

    /// `n x D` matrix with entries `scale · cos(β_jᵀx_i + b_j)`.
    pub fn map(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.spec.input_dim {
            return shape_err(format!("inputs have {} features, map expects {}", x.ncols(), self.spec.input_dim));
        }
        let mut z = x.dot(&self.omegas.t());
        z.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
            for (v, b) in row.iter_mut().zip(self.phases.iter()) {
                *v = self.scale * (*v + b).cos();
            }
        });
        Ok(z)
    }

    /// The first `m` features, keeping this map's amplitude so that the
    /// mapped columns are exactly the leading columns of `self.map(x)`.
    ///
    /// Features are drawn one at a time from the seeded stream, so the
    /// leading features of a larger map coincide with a smaller map drawn
    /// from the same seed; only the amplitude differs.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.spec.num_features {
            return param_err(format!("cannot truncate {} features to {m}", self.spec.num_features));
        }
        let count = self.spec.scale_count.unwrap_or(self.spec.num_features);
        Ok(Self {
            spec: FeatureMapSpec { num_features: m, scale_count: Some(count), ..self.spec },
            omegas: self.omegas.slice(s![..m, ..]).to_owned(),
            phases: self.phases.slice(s![..m]).to_owned(),
            scale: self.scale,
        })
    }
}

/// Ridge regression on mapped features: `(XtᵀXt + nλI) W = XtᵀY`.
pub fn rf_fit(xt: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<PrimalModel> {
    rls_fit_primal(xt, y, lambda)
}

/// Feature map plus linear weights on the mapped inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfModel {
    pub map: FeatureMap,
    pub weights: Array2<f64>,
}

impl RfModel {
    pub fn fit(map: FeatureMap, x: ArrayView2<f64>, y: ArrayView2<f64>, lambda: f64) -> Result<Self> {
        let xt = map.map(x)?;
        let weights = rf_fit(xt.view(), y, lambda)?.weights;
        Ok(Self { map, weights })
    }
}

impl Predictor for RfModel {
    fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.map.map(x)?.dot(&self.weights))
    }
}

/// Relative residual above which an incremental step is refactorized.
const RF_UPDATE_TOL: f64 = 1e-5;

/// Weights for `m = 1 .. D` features.
///
/// `weights[m-1]` is `m x T` and acts on the first `m` columns of `map(x)`,
/// all at the full map's amplitude `√(2/D)`. Rescaling the columns to
/// `√(2/m)` is the same estimator at `λ·D/m`.
#[derive(Debug, Clone)]
pub struct RfPath {
    pub map: FeatureMap,
    pub weights: Vec<Array2<f64>>,
    pub events: Vec<FallbackEvent>,
}

impl RfPath {
    /// Model on the first `m` features (1-based).
    pub fn model(&self, m: usize) -> Result<RfModel> {
        Ok(RfModel { map: self.map.truncated(m)?, weights: self.weights[m - 1].clone() })
    }

    pub fn predict(&self, m: usize, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.model(m)?.predict(x)
    }
}

/// Ridge path over the number of features, growing the Cholesky factor of
/// `G_m = A_mᵀA_m + λnI` by one bordered update per feature.
pub fn rf_incremental_path(x: ArrayView2<f64>, y: ArrayView2<f64>, map: &FeatureMap, lambda: f64) -> Result<RfPath> {
    if !(lambda > 0.0) {
        return param_err(format!("lambda must be > 0, got {lambda}"));
    }
    let n = x.nrows();
    if y.nrows() != n {
        return shape_err(format!("Y has {} rows, X has {n}", y.nrows()));
    }
    let a = map.map(x)?;
    let aty = a.t().dot(&y);
    let lambda_n = lambda * n as f64;
    let d_max = map.num_features();
    let mut weights = Vec::with_capacity(d_max);
    let mut events = Vec::new();
    let mut factor: Option<CholFactor> = None;
    for t in 0..d_max {
        let col = a.column(t);
        let gamma = col.dot(&col) + lambda_n;
        let next = match factor.take() {
            None => CholFactor::from_upper(Array2::from_elem((1, 1), gamma.sqrt()))?,
            Some(prev) => {
                let c = a.slice(s![.., ..t]).t().dot(&col);
                match bordered_update(&prev, c.view(), gamma, RF_UPDATE_TOL) {
                    Ok(f) => f,
                    Err(reason) => {
                        debug!("rf path: step {} refactorizes ({reason})", t + 1);
                        events.push(FallbackEvent { step: t + 1, reason });
                        let at = a.slice(s![.., ..=t]);
                        let mut g = at.t().dot(&at);
                        g.diag_mut().mapv_inplace(|v| v + lambda_n);
                        cholesky(g.view())?
                    }
                }
            }
        };
        weights.push(next.solve(aty.slice(s![..=t, ..]))?);
        factor = Some(next);
    }
    Ok(RfPath { map: map.clone(), weights, events })
}

/// The appendix-style vectors `u = (2c/g, √(3γ/4))`, `v = (-2c/g, √(γ/4))`
/// with `g = (√3 - 1)γ`, meant for two positive rank-one updates.
///
/// Kept only so tests can show that `uuᵀ + vvᵀ` does not reproduce the
/// bordered update; the path uses the update/downdate pair instead.
pub fn appendix_update_vectors(c: ArrayView1<f64>, gamma: f64) -> (Array1<f64>, Array1<f64>) {
    let g = (3f64.sqrt() - 1.0) * gamma;
    let p = c.len() + 1;
    let mut u = Array1::zeros(p);
    let mut v = Array1::zeros(p);
    u.slice_mut(s![..p - 1]).assign(&(&c * (2.0 / g)));
    v.slice_mut(s![..p - 1]).assign(&(&c * (-2.0 / g)));
    u[p - 1] = (3.0 * gamma / 4.0).sqrt();
    v[p - 1] = (gamma / 4.0).sqrt();
    (u, v)
}
