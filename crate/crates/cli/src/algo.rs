//! Algorithm selection and fitting from `algorithm.*` keys.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde_json::{json, Value};
use specreg::exact::{rls_fit_primal, DualModel, PrimalModel};
use specreg::filters::{default_landweber_step, landweber_iterate};
use specreg::nystrom::{sample_uniform, NystromModel};
use specreg::nytro::{default_step, nytro_fit, NytroSolver, StopRule};
use specreg::persist::SavedModel;
use specreg::random_features::{sample_features, RfModel};
use specreg::rlsc::RlscState;
use specreg::selection::Hyper;
use specreg::sgm::{LossSpec, SgmRunner, StepSchedule};
use specreg::{FilterSpec, KernelSpec, Predictor};

use crate::config::Config;
use crate::error::{CliError, CliResult};

/// Offsets added to `--seed` for each independent random draw.
pub const CENTER_SEED: u64 = 1;
pub const FEATURE_SEED: u64 = 2;
pub const SGM_SEED: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Krls,
    Kols,
    Rls,
    Nkrls,
    Nytro,
    Rf,
    Sgm,
    Landweber,
    Tsvd,
    Irlsc,
}

impl Algorithm {
    pub const ALL: [(&'static str, Algorithm); 10] = [
        ("krls", Algorithm::Krls),
        ("kols", Algorithm::Kols),
        ("rls", Algorithm::Rls),
        ("nkrls", Algorithm::Nkrls),
        ("nytro", Algorithm::Nytro),
        ("rf", Algorithm::Rf),
        ("sgm", Algorithm::Sgm),
        ("landweber", Algorithm::Landweber),
        ("tsvd", Algorithm::Tsvd),
        ("irlsc", Algorithm::Irlsc),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, a)| *a == self).map(|(n, _)| *n).unwrap()
    }

    fn parse(s: &str) -> CliResult<Self> {
        Self::ALL.iter().find(|(n, _)| *n == s).map(|(_, a)| *a).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|(n, _)| *n).collect();
            CliError::config("algorithm.name", format!("unknown algorithm {s:?}; expected one of {}", names.join(", ")))
        })
    }

    fn uses_lambda(self) -> bool {
        matches!(self, Self::Krls | Self::Rls | Self::Nkrls | Self::Rf | Self::Tsvd | Self::Irlsc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Fixed(f64),
    /// Chosen on the validation block.
    Auto,
}

#[derive(Debug, Clone)]
pub struct AlgoSpec {
    pub algo: Algorithm,
    pub kernel: KernelSpec,
    pub lambda: Option<f64>,
    pub m: Option<usize>,
    pub t: Option<usize>,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub loss: Option<LossSpec>,
    pub eta1: Option<f64>,
    pub theta: f64,
    pub epochs: usize,
    pub features: Option<usize>,
    pub average: bool,
    pub alpha: Alpha,
    pub min_count: usize,
    pub stop: StopRule,
}

/// A fitted model and algorithm-specific facts for the report.
pub struct Fitted {
    pub model: SavedModel,
    pub info: Value,
}

impl AlgoSpec {
    pub fn from_config(c: &Config) -> CliResult<Self> {
        let algo = Algorithm::parse(c.require_str("algorithm.name")?)?;
        let sigma = c.f64("algorithm.sigma")?.unwrap_or(1.0);
        let kernel = match c.str("algorithm.kernel").unwrap_or(if algo == Algorithm::Rls { "linear" } else { "gaussian" }) {
            "gaussian" => KernelSpec::gaussian(sigma),
            "linear" => Ok(KernelSpec::Linear),
            "polynomial" => KernelSpec::polynomial(c.u32("algorithm.degree")?.unwrap_or(2)),
            other => return Err(CliError::config("algorithm.kernel", format!("unknown kernel {other:?}"))),
        }
        .map_err(|e| CliError::config("algorithm.sigma", e.to_string()))?;
        let loss = match c.str("algorithm.loss") {
            None => None,
            Some("square") => Some(LossSpec::Square),
            Some("hinge") => Some(LossSpec::Hinge),
            Some("logistic") => Some(LossSpec::Logistic),
            Some(other) => return Err(CliError::config("algorithm.loss", format!("unknown loss {other:?}"))),
        };
        let alpha = match c.str("algorithm.alpha") {
            None => Alpha::Fixed(0.0),
            Some("auto") => Alpha::Auto,
            Some(_) => Alpha::Fixed(c.f64("algorithm.alpha")?.unwrap()),
        };
        let stop = match c.str("algorithm.stop") {
            None | Some("last") => StopRule::Last,
            Some("early") => StopRule::Early { rel_threshold: c.f64("algorithm.stop_threshold")?.unwrap_or(0.05) },
            Some(other) => return Err(CliError::config("algorithm.stop", format!("expected last or early, got {other:?}"))),
        };
        let spec = Self {
            algo,
            kernel,
            lambda: c.f64("algorithm.lambda")?,
            m: c.usize("algorithm.m")?,
            t: c.usize("algorithm.t")?,
            eta: c.f64("algorithm.eta")?,
            gamma: c.f64("algorithm.gamma")?,
            loss,
            eta1: c.f64("algorithm.eta1")?,
            theta: c.f64("algorithm.theta")?.unwrap_or(0.0),
            epochs: c.usize("algorithm.epochs")?.unwrap_or(10),
            features: c.usize("algorithm.features")?,
            average: c.bool("algorithm.average")?.unwrap_or(false),
            alpha,
            min_count: c.usize("algorithm.min_count")?.unwrap_or(20),
            stop,
        };
        if spec.epochs == 0 {
            return Err(CliError::config("algorithm.epochs", "must be >= 1"));
        }
        Ok(spec)
    }

    /// Grid coordinates override the configured values.
    pub fn with_hyper(&self, h: &Hyper) -> Self {
        let mut s = self.clone();
        s.lambda = h.lambda.or(s.lambda);
        s.m = h.m.or(s.m);
        s.t = h.t.or(s.t);
        s
    }

    /// Checks that every hyperparameter the algorithm needs is set.
    pub fn check_complete(&self) -> CliResult<()> {
        if self.algo.uses_lambda() && self.lambda.is_none() {
            return Err(CliError::config("algorithm.lambda", format!("{} needs a regularization parameter", self.algo.name())));
        }
        if matches!(self.algo, Algorithm::Nkrls | Algorithm::Nytro | Algorithm::Rf) && self.m.is_none() {
            return Err(CliError::config("algorithm.m", format!("{} needs a number of centers or features", self.algo.name())));
        }
        if matches!(self.algo, Algorithm::Nytro | Algorithm::Landweber) && self.t.is_none() {
            return Err(CliError::config("algorithm.t", format!("{} needs an iteration count", self.algo.name())));
        }
        for (key, v) in [("algorithm.m", self.m), ("algorithm.t", self.t), ("algorithm.features", self.features)] {
            if v == Some(0) {
                return Err(CliError::config(key, "must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn landweber_step(&self, k: ArrayView2<f64>) -> f64 {
        self.eta.unwrap_or_else(|| default_landweber_step(k))
    }

    /// Fits on `(x, y)`. `val` is needed only for early stopping and automatic recoding.
    pub fn fit(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, val: Option<(ArrayView2<f64>, ArrayView2<f64>)>, seed: u64) -> CliResult<Fitted> {
        self.check_complete()?;
        let n = x.nrows();
        let lambda = self.lambda.unwrap_or(0.0);
        let arc_x = || Arc::new(x.to_owned());
        let no_info = Value::Null;
        Ok(match self.algo {
            Algorithm::Krls => Fitted { model: SavedModel::Dual(DualModel::fit_krls(self.kernel, arc_x(), y, lambda)?), info: no_info },
            Algorithm::Kols => Fitted { model: SavedModel::Dual(DualModel::fit_kols(self.kernel, arc_x(), y)?), info: no_info },
            Algorithm::Tsvd => Fitted {
                model: SavedModel::Dual(DualModel::fit_filtered(self.kernel, arc_x(), y, &FilterSpec::tsvd(lambda)?)?),
                info: no_info,
            },
            Algorithm::Rls => Fitted { model: SavedModel::Primal(rls_fit_primal(x, y, lambda)?), info: no_info },
            Algorithm::Landweber => {
                let k = self.kernel.gram(x);
                let eta = self.landweber_step(k.view());
                let alpha = landweber_iterate(k.view(), y, eta, self.t.unwrap())?.pop().unwrap();
                Fitted { model: SavedModel::Dual(DualModel::new(self.kernel, arc_x(), alpha)?), info: json!({ "eta": eta }) }
            }
            Algorithm::Nkrls => {
                let centers = sample_uniform(n, self.m.unwrap(), seed.wrapping_add(CENTER_SEED))?;
                Fitted { model: SavedModel::Nystrom(NystromModel::fit(self.kernel, x, y, &centers, lambda)?), info: no_info }
            }
            Algorithm::Nytro => self.fit_nytro(x, y, val, seed)?,
            Algorithm::Rf => {
                let map = sample_features(x.ncols(), self.m.unwrap(), self.rf_sigma()?, seed.wrapping_add(FEATURE_SEED))?;
                Fitted { model: SavedModel::RandomFeatures(RfModel::fit(map, x, y, lambda)?), info: no_info }
            }
            Algorithm::Sgm => self.fit_sgm(x, y, seed)?,
            Algorithm::Irlsc => self.fit_irlsc(x, y, val)?,
        })
    }

    fn rf_sigma(&self) -> CliResult<f64> {
        match self.kernel {
            KernelSpec::Gaussian { sigma } => Ok(sigma),
            _ => Err(CliError::config("algorithm.kernel", "random features approximate the gaussian kernel only")),
        }
    }

    fn fit_nytro(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, val: Option<(ArrayView2<f64>, ArrayView2<f64>)>, seed: u64) -> CliResult<Fitted> {
        let idx = sample_uniform(x.nrows(), self.m.unwrap(), seed.wrapping_add(CENTER_SEED))?;
        let centers = x.select(Axis(0), &idx);
        let knm = self.kernel.cross_gram(x, centers.view())?;
        let kmm = self.kernel.gram(centers.view());
        let gamma = match self.gamma {
            Some(g) => g,
            None => default_step(&self.kernel, x)?,
        };
        let t_max = self.t.unwrap();
        let (alpha, t) = match self.stop {
            StopRule::Last => {
                let mut solver = NytroSolver::new(knm.view(), kmm.view(), y, gamma)?;
                for _ in 0..t_max {
                    solver.step();
                }
                (solver.state().alpha(), t_max)
            }
            StopRule::Early { .. } => {
                let Some((xv, yv)) = val else {
                    return Err(CliError::config("algorithm.stop", "early stopping needs a validation split"));
                };
                let kval = self.kernel.cross_gram(xv, centers.view())?;
                let fit = nytro_fit(knm.view(), kmm.view(), y, kval.view(), yv, gamma, t_max, self.stop)?;
                (fit.alpha, fit.t)
            }
        };
        let model = NystromModel { kernel: self.kernel, centers, alpha_tilde: alpha, lambda: 0.0 };
        Ok(Fitted { model: SavedModel::Nystrom(model), info: json!({ "gamma": gamma, "t": t }) })
    }

    fn fit_sgm(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, seed: u64) -> CliResult<Fitted> {
        if y.ncols() != 1 {
            return Err(CliError::config("algorithm.name", "sgm needs a single output (binary labels or one regression target)"));
        }
        let n = x.nrows();
        let map = match self.features {
            Some(dim) => Some(sample_features(x.ncols(), dim, self.rf_sigma()?, seed.wrapping_add(FEATURE_SEED))?),
            None => None,
        };
        let feats = match &map {
            Some(m) => m.map(x)?,
            None => x.to_owned(),
        };
        let loss = self.loss.unwrap_or(LossSpec::Square);
        let sched = StepSchedule::new(self.eta1.unwrap_or(1.0 / (n as f64).sqrt()), self.theta, 1.0)
            .map_err(|e| CliError::config("algorithm.eta1", e.to_string()))?;
        let yv = y.column(0);
        let mut run = SgmRunner::new(feats.view(), yv, loss, sched, seed.wrapping_add(SGM_SEED))?;
        for _ in 0..self.epochs * n {
            run.advance();
        }
        let w = if self.average { run.average() } else { run.iterate().clone() };
        let weights = w.insert_axis(Axis(1));
        let model = match map {
            Some(map) => SavedModel::RandomFeatures(RfModel { map, weights }),
            None => SavedModel::Primal(PrimalModel { weights }),
        };
        Ok(Fitted { model, info: json!({ "updates": run.t() - 1, "eta1": sched.eta1 }) })
    }

    fn fit_irlsc(&self, x: ArrayView2<f64>, y: ArrayView2<f64>, val: Option<(ArrayView2<f64>, ArrayView2<f64>)>) -> CliResult<Fitted> {
        let labels = labels_of(y);
        let mut state = RlscState::init(x.ncols(), self.lambda.unwrap(), 0.0)?;
        for i in stream_order(&labels) {
            state.update(x.row(i), labels[i])?;
        }
        let alpha = match self.alpha {
            Alpha::Fixed(a) => a,
            Alpha::Auto => {
                let Some((xv, yv)) = val else {
                    return Err(CliError::config("algorithm.alpha", "automatic recoding needs a validation split"));
                };
                let candidates: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
                state.select_alpha(&candidates, xv, &labels_of(yv), self.min_count)?
            }
        };
        state.set_alpha_exp(alpha).map_err(|e| CliError::config("algorithm.alpha", e.to_string()))?;
        let counts = state.counts().to_vec();
        Ok(Fitted { model: SavedModel::Rlsc(state), info: json!({ "alpha": alpha, "class_counts": counts }) })
    }
}

/// 1-based labels from a target matrix: sign for one column, argmax otherwise.
pub fn labels_of(y: ArrayView2<f64>) -> Vec<usize> {
    if y.ncols() == 1 {
        y.column(0).iter().map(|&v| if v >= 0.0 { 2 } else { 1 }).collect()
    } else {
        y.axis_iter(Axis(0)).map(|r| specreg::selection::argmax(r) + 1).collect()
    }
}

/// Row order in which each new class appears right after the previous
/// ones: rows are taken in file order, and a row whose class is not yet
/// reachable waits until it is.
pub fn stream_order(labels: &[usize]) -> Vec<usize> {
    let mut order = Vec::with_capacity(labels.len());
    let mut pending: Vec<usize> = Vec::new();
    let mut known = 0;
    for (i, &l) in labels.iter().enumerate() {
        if l <= known + 1 {
            order.push(i);
            if l == known + 1 {
                known += 1;
                loop {
                    let before = known;
                    let (ready, rest): (Vec<usize>, Vec<usize>) = pending.iter().partition(|&&j| labels[j] <= known + 1);
                    for j in ready {
                        order.push(j);
                        known = known.max(labels[j]);
                    }
                    pending = rest;
                    if known == before {
                        break;
                    }
                }
            }
        } else {
            pending.push(i);
        }
    }
    // Rows of classes that never became reachable fail on update with a located error.
    order.extend(pending);
    order
}

/// Scores as the evaluation metrics expect them: a two-class classifier
/// with one score column per class becomes a single `±` margin.
pub struct Scored {
    pub model: SavedModel,
    pub binary: bool,
}

impl Predictor for Scored {
    fn predict(&self, x: ArrayView2<f64>) -> specreg::Result<Array2<f64>> {
        let s = self.model.predict(x)?;
        if self.binary && s.ncols() == 2 {
            Ok((&s.slice(s![.., 1..2]) - &s.slice(s![.., 0..1])).to_owned())
        } else {
            Ok(s)
        }
    }
}
