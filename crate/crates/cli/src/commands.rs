//! The five subcommands. Each returns a JSON report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use specreg::data::{apply_standardize, Dataset, Standardizer, Task};
use specreg::filters::landweber_iterate;
use specreg::nystrom::sample_uniform;
use specreg::nytro::{default_step, NytroSolver, StopRule};
use specreg::persist::{load_model, save_model};
use specreg::random_features::{rf_incremental_path, sample_features};
use specreg::selection::{
    holdout_cv, select_best, surface_incremental, surface_naive, vfold_cv, ErrorSurface, Hyper, Metric, SurfaceSetup,
};
use specreg::{KernelSpec, Predictor};

use crate::algo::{labels_of, AlgoSpec, Algorithm, Scored, CENTER_SEED, FEATURE_SEED};
use crate::config::Config;
use crate::data::{metric_for, DataSpec, Split};
use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const MODEL_FILE: &str = "model.json";
pub const STANDARDIZER_FILE: &str = "standardizer.json";

/// Fields shared by every report.
#[derive(Debug, Serialize)]
struct Header<'a> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    config: &'a BTreeMap<String, String>,
}

fn header<'a>(command: &'a str, seed: u64, config: &'a Config) -> Header<'a> {
    Header { schema_version: REPORT_SCHEMA_VERSION, command, seed, config: config.entries() }
}

fn merge(head: Header<'_>, body: Value) -> CliResult<Value> {
    let mut v = serde_json::to_value(head)?;
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    Ok(v)
}

fn write_report(out: &Path, name: &str, report: &Value) -> CliResult<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join(name), serde_json::to_string_pretty(report)? + "\n")?;
    Ok(())
}

fn evaluate(model: &dyn Predictor, x: ArrayView2<f64>, y: ArrayView2<f64>, metric: Metric) -> CliResult<f64> {
    let pred = model.predict(x)?;
    if pred.ncols() != y.ncols() {
        return Err(CliError::Core(specreg::Error::Shape(format!(
            "model has {} outputs, targets have {}",
            pred.ncols(),
            y.ncols()
        ))));
    }
    Ok(metric.eval(pred.view(), y))
}

fn is_binary(ds: &Dataset) -> bool {
    ds.task() == Task::Classification && ds.target_matrix().ncols() == 1
}

struct Prepared {
    spec: AlgoSpec,
    data: DataSpec,
    split: Split,
    metric: Metric,
    binary: bool,
    source: PathBuf,
}

fn prepare(config: &Config, seed: u64) -> CliResult<Prepared> {
    let spec = AlgoSpec::from_config(config)?;
    let data = DataSpec::from_config(config)?;
    let (source, ds) = data.load(config, "data.train")?;
    let split = Split::new(&ds, &data, seed)?;
    Ok(Prepared { metric: metric_for(ds.task()), binary: is_binary(&ds), spec, data, split, source })
}

fn require_val(p: &Prepared) -> CliResult<&Dataset> {
    p.split.val.as_ref().ok_or_else(|| CliError::config("data.val_fraction", "this command needs a validation split (> 0)"))
}

pub fn cmd_train(config: &Config, seed: u64, out: &Path) -> CliResult<Value> {
    let start = Instant::now();
    let p = prepare(config, seed)?;
    let y = p.split.y_train();
    let val = p.split.val.as_ref().map(|v| (v.x.clone(), v.target_matrix()));
    let t0 = Instant::now();
    let fitted = p.spec.fit(p.split.train.x.view(), y.view(), val.as_ref().map(|(x, y)| (x.view(), y.view())), seed)?;
    let fit_s = t0.elapsed().as_secs_f64();

    let kind = fitted.model.kind();
    let scored = Scored { model: fitted.model, binary: p.binary };
    let mut metrics = BTreeMap::new();
    metrics.insert("train", evaluate(&scored, p.split.train.x.view(), y.view(), p.metric)?);
    if let Some((xv, yv)) = &val {
        metrics.insert("validation", evaluate(&scored, xv.view(), yv.view(), p.metric)?);
    }
    let mut n_test = 0;
    if config.has("data.test") {
        let (_, test) = p.data.load(config, "data.test")?;
        let test = match &p.split.standardizer {
            Some(st) => apply_standardize(&test, st)?,
            None => test,
        };
        n_test = test.len();
        metrics.insert("test", evaluate(&scored, test.x.view(), test.target_matrix().view(), p.metric)?);
    }

    fs::create_dir_all(out)?;
    save_model(&out.join(MODEL_FILE), &scored.model)?;
    if let Some(st) = &p.split.standardizer {
        fs::write(out.join(STANDARDIZER_FILE), serde_json::to_string(st)?)?;
    }
    let body = json!({
        "algorithm": p.spec.algo.name(),
        "model_kind": kind,
        "model_path": out.join(MODEL_FILE),
        "data": {
            "source": p.source,
            "n_train": p.split.train.len(),
            "n_validation": p.split.val.as_ref().map_or(0, Dataset::len),
            "n_test": n_test,
            "dim": p.split.train.dim(),
            "task": p.split.train.task(),
            "standardized": p.split.standardizer.is_some(),
        },
        "metric": p.metric,
        "metrics": metrics,
        "fit_info": fitted.info,
        "timings": { "fit_s": fit_s, "total_s": start.elapsed().as_secs_f64() },
    });
    let report = merge(header("train", seed, config), body)?;
    write_report(out, "train_report.json", &report)?;
    Ok(report)
}

pub fn cmd_predict(config: &Config, seed: u64, model_path: &Path, out: &Path) -> CliResult<Value> {
    let model = load_model(model_path)?;
    let data = DataSpec::from_config(config)?;
    let (source, ds) = data.load(config, "data.test")?;
    let st_path = model_path.with_file_name(STANDARDIZER_FILE);
    let standardized = st_path.is_file();
    let ds = if standardized {
        let st: Standardizer = serde_json::from_str(&fs::read_to_string(&st_path)?)?;
        apply_standardize(&ds, &st)?
    } else {
        ds
    };
    let scored = Scored { model, binary: is_binary(&ds) };
    let pred = scored.predict(ds.x.view())?;
    let metric = metric_for(ds.task());
    let truth = ds.target_matrix();
    let error = (pred.ncols() == truth.ncols()).then(|| metric.eval(pred.view(), truth.view()));
    let labels = (ds.task() == Task::Classification).then(|| labels_of(pred.view()));
    let body = json!({
        "model_kind": scored.model.kind(),
        "model_path": model_path,
        "data": { "source": source, "n": ds.len(), "standardized": standardized },
        "predictions": pred.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>(),
        "labels": labels,
        "metric": metric,
        "error": error,
    });
    let report = merge(header("predict", seed, config), body)?;
    write_report(out, "predictions.json", &report)?;
    Ok(report)
}

/// Grid coordinates from `grid.*`; an absent coordinate is a single `None`.
struct Grids {
    lambda: Option<Vec<f64>>,
    m: Option<Vec<usize>>,
    t: Option<Vec<usize>>,
}

impl Grids {
    fn from_config(c: &Config) -> CliResult<Self> {
        let t = match (c.usize_grid("grid.t")?, c.usize("grid.t_max")?) {
            (Some(_), Some(_)) => return Err(CliError::config("grid.t_max", "give either grid.t or grid.t_max")),
            (Some(t), None) => Some(t),
            (None, Some(0)) => return Err(CliError::config("grid.t_max", "must be >= 1")),
            (None, Some(tm)) => Some((1..=tm).collect()),
            (None, None) => None,
        };
        let g = Self { lambda: c.f64_grid("grid.lambda")?, m: c.usize_grid("grid.m")?, t };
        if g.lambda.is_none() && g.m.is_none() && g.t.is_none() {
            return Err(CliError::config("grid.lambda", "no grid given (grid.lambda, grid.m, grid.t or grid.t_max)"));
        }
        for (key, v) in [("grid.m", &g.m), ("grid.t", &g.t)] {
            if v.as_ref().is_some_and(|v| v.contains(&0)) {
                return Err(CliError::config(key, "grid values must be >= 1"));
            }
        }
        Ok(g)
    }

    fn cells(&self) -> Vec<Hyper> {
        let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let opt_u = |v: &Option<Vec<usize>>| v.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let mut cells = Vec::new();
        for &lambda in &opt(&self.lambda) {
            for &m in &opt_u(&self.m) {
                for &t in &opt_u(&self.t) {
                    cells.push(Hyper { lambda, m, t });
                }
            }
        }
        cells
    }
}

#[derive(Debug, Serialize)]
struct Entry {
    #[serde(flatten)]
    hyper: Hyper,
    validation_error: f64,
}

fn increasing(key: &str, v: &[usize]) -> CliResult<()> {
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::config(key, "grid must be strictly increasing"));
    }
    Ok(())
}

pub fn cmd_path(config: &Config, seed: u64, out: &Path) -> CliResult<Value> {
    let start = Instant::now();
    let p = prepare(config, seed)?;
    let grids = Grids::from_config(config)?;
    let val = require_val(&p)?;
    let (xt, yt) = (p.split.train.x.view(), p.split.y_train());
    let (xv, yv) = (val.x.view(), val.target_matrix());
    let spec = &p.spec;
    let mut surface = None;

    let entries: Vec<Entry> = match spec.algo {
        Algorithm::Nkrls if grids.t.is_none() => {
            let lambdas = match &grids.lambda {
                Some(l) => l.clone(),
                None => vec![req(spec.lambda, "algorithm.lambda")?],
            };
            let ms = match &grids.m {
                Some(m) => m.clone(),
                None => vec![req(spec.m, "algorithm.m")?],
            };
            increasing("grid.m", &ms)?;
            let setup = surface_setup(&p, *ms.last().unwrap(), seed)?;
            let s = surface_incremental(&setup, spec.kernel, &lambdas, &ms, seed, p.metric)?;
            let entries = surface_entries(&s, grids.lambda.is_some(), grids.m.is_some());
            surface = Some(s);
            entries
        }
        Algorithm::Landweber if grids.lambda.is_none() && grids.m.is_none() => {
            let ts = grids.t.clone().unwrap();
            increasing("grid.t", &ts)?;
            let k = spec.kernel.gram(xt);
            let alphas = landweber_iterate(k.view(), yt.view(), spec.landweber_step(k.view()), *ts.last().unwrap())?;
            let kval = spec.kernel.cross_gram(xv, xt)?;
            ts.iter()
                .map(|&t| {
                    let e = p.metric.eval(margin(kval.dot(&alphas[t - 1]), p.binary).view(), yv.view());
                    Entry { hyper: Hyper { t: Some(t), ..Hyper::default() }, validation_error: e }
                })
                .collect()
        }
        Algorithm::Rf if grids.m.is_some() && grids.t.is_none() => {
            let ms = grids.m.clone().unwrap();
            increasing("grid.m", &ms)?;
            let sigma = match spec.kernel {
                KernelSpec::Gaussian { sigma } => sigma,
                _ => return Err(CliError::config("algorithm.kernel", "random features approximate the gaussian kernel only")),
            };
            let map = sample_features(xt.ncols(), *ms.last().unwrap(), sigma, seed.wrapping_add(FEATURE_SEED))?;
            let lambdas: Vec<Option<f64>> = grids.lambda.as_ref().map_or(vec![None], |l| l.iter().map(|&v| Some(v)).collect());
            let rows: CliResult<Vec<Vec<Entry>>> = lambdas
                .par_iter()
                .map(|&l| {
                    let path = rf_incremental_path(xt, yt.view(), &map, l.or(spec.lambda).ok_or_else(lambda_missing)?)?;
                    ms.iter()
                        .map(|&m| {
                            let e = p.metric.eval(margin(path.predict(m, xv)?, p.binary).view(), yv.view());
                            Ok(Entry { hyper: Hyper { lambda: l, m: Some(m), t: None }, validation_error: e })
                        })
                        .collect()
                })
                .collect();
            rows?.into_iter().flatten().collect()
        }
        Algorithm::Nytro if grids.t.is_some() && grids.lambda.is_none() => {
            let ts = grids.t.clone().unwrap();
            increasing("grid.t", &ts)?;
            let ms: Vec<Option<usize>> = grids.m.as_ref().map_or(vec![None], |v| v.iter().map(|&m| Some(m)).collect());
            let gamma = match spec.gamma {
                Some(g) => g,
                None => default_step(&spec.kernel, xt)?,
            };
            let rows: CliResult<Vec<Vec<Entry>>> = ms
                .par_iter()
                .map(|&m| {
                    let m_eff = req(m.or(spec.m), "algorithm.m")?;
                    let idx = sample_uniform(xt.nrows(), m_eff, seed.wrapping_add(CENTER_SEED))?;
                    let centers = xt.select(ndarray::Axis(0), &idx);
                    let knm = spec.kernel.cross_gram(xt, centers.view())?;
                    let kmm = spec.kernel.gram(centers.view());
                    let kval = spec.kernel.cross_gram(xv, centers.view())?;
                    let mut solver = NytroSolver::new(knm.view(), kmm.view(), yt.view(), gamma)?;
                    let mut row = Vec::with_capacity(ts.len());
                    for &t in &ts {
                        while solver.state().t < t {
                            solver.step();
                        }
                        let pred = kval.dot(&solver.state().alpha());
                        let e = p.metric.eval(margin(pred, p.binary).view(), yv.view());
                        row.push(Entry { hyper: Hyper { lambda: None, m, t: Some(t) }, validation_error: e });
                    }
                    Ok(row)
                })
                .collect();
            rows?.into_iter().flatten().collect()
        }
        _ => {
            if spec.algo == Algorithm::Nytro && spec.stop != StopRule::Last {
                return Err(CliError::config("algorithm.stop", "grid cells of nytro run a fixed iteration count; use last"));
            }
            let cells = grids.cells();
            let val_pair = (xv, yv.view());
            let errors: CliResult<Vec<f64>> = cells
                .par_iter()
                .map(|h| {
                    let fitted = spec.with_hyper(h).fit(xt, yt.view(), Some(val_pair), seed)?;
                    evaluate(&Scored { model: fitted.model, binary: p.binary }, xv, yv.view(), p.metric)
                })
                .collect();
            cells.into_iter().zip(errors?).map(|(hyper, validation_error)| Entry { hyper, validation_error }).collect()
        }
    };

    let table: Vec<(Hyper, f64)> = entries.iter().map(|e| (e.hyper, e.validation_error)).collect();
    let (best, best_error) = select_best(&table)?;
    let body = json!({
        "algorithm": spec.algo.name(),
        "metric": p.metric,
        "n_train": p.split.train.len(),
        "n_validation": val.len(),
        "entries": entries,
        "best": best,
        "best_error": best_error,
        "surface": surface,
        "timings": { "total_s": start.elapsed().as_secs_f64() },
    });
    let report = merge(header("path", seed, config), body)?;
    write_report(out, "path_report.json", &report)?;
    Ok(report)
}

fn req<T>(v: Option<T>, key: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::config(key, "required when the grid does not cover it"))
}

fn lambda_missing() -> CliError {
    CliError::config("algorithm.lambda", "required when the grid does not cover it")
}

fn margin(pred: Array2<f64>, binary: bool) -> Array2<f64> {
    if binary && pred.ncols() == 2 {
        (&pred.slice(s![.., 1..2]) - &pred.slice(s![.., 0..1])).to_owned()
    } else {
        pred
    }
}

fn surface_setup(p: &Prepared, m_max: usize, seed: u64) -> CliResult<SurfaceSetup> {
    let val = require_val(p)?;
    Ok(SurfaceSetup {
        x_train: p.split.train.x.clone(),
        y_train: p.split.y_train(),
        x_val: val.x.clone(),
        y_val: val.target_matrix(),
        center_order: sample_uniform(p.split.train.len(), m_max, seed.wrapping_add(CENTER_SEED))?,
    })
}

fn surface_entries(s: &ErrorSurface, keep_lambda: bool, keep_m: bool) -> Vec<Entry> {
    let mut out = Vec::new();
    for (&l, row) in s.lambda_grid.iter().zip(&s.errors) {
        for (&m, &e) in s.m_grid.iter().zip(row) {
            let hyper = Hyper { lambda: keep_lambda.then_some(l), m: keep_m.then_some(m), t: None };
            out.push(Entry { hyper, validation_error: e });
        }
    }
    out
}

pub fn cmd_cv(config: &Config, seed: u64, out: &Path) -> CliResult<Value> {
    let start = Instant::now();
    let p = prepare(config, seed)?;
    let grids = Grids::from_config(config)?;
    let cells = grids.cells();
    if p.spec.algo == Algorithm::Nytro && p.spec.stop != StopRule::Last {
        return Err(CliError::config("algorithm.stop", "cross-validated nytro runs a fixed iteration count; use last"));
    }
    let spec = p.spec.clone();
    let binary = p.binary;
    let trainer = move |h: &Hyper, x: ArrayView2<f64>, y: ArrayView2<f64>| -> specreg::Result<Box<dyn Predictor + Send>> {
        let fitted = spec.with_hyper(h).fit(x, y, None, seed).map_err(|e| match e {
            CliError::Core(inner) => inner,
            other => specreg::Error::Parameter(other.to_string()),
        })?;
        Ok(Box::new(Scored { model: fitted.model, binary }))
    };
    for h in &cells {
        p.spec.with_hyper(h).check_complete()?;
    }
    // Cross-validation runs on every loaded row; the hold-out fraction and fold count apply to that set.
    let (x, y) = match &p.split.val {
        Some(v) => (
            ndarray::concatenate![ndarray::Axis(0), p.split.train.x, v.x],
            ndarray::concatenate![ndarray::Axis(0), p.split.y_train(), v.target_matrix()],
        ),
        None => (p.split.train.x.clone(), p.split.y_train()),
    };
    let (scheme, result) = match config.usize("grid.folds")? {
        Some(v) if v >= 2 => ("vfold", vfold_cv(&trainer, &cells, x.view(), y.view(), v, seed, p.metric)?),
        Some(_) => return Err(CliError::config("grid.folds", "need at least 2 folds")),
        None => {
            if p.data.val_fraction == 0.0 {
                return Err(CliError::config("data.val_fraction", "hold-out cross-validation needs a fraction > 0"));
            }
            ("holdout", holdout_cv(&trainer, &cells, x.view(), y.view(), p.data.val_fraction, seed, p.metric)?)
        }
    };
    let table: Vec<Entry> = result.table.iter().map(|&(hyper, e)| Entry { hyper, validation_error: e }).collect();
    let body = json!({
        "algorithm": p.spec.algo.name(),
        "metric": p.metric,
        "scheme": scheme,
        "n": x.nrows(),
        "best": result.best,
        "best_error": result.best_error,
        "table": table,
        "timings": { "total_s": start.elapsed().as_secs_f64() },
    });
    let report = merge(header("cv", seed, config), body)?;
    write_report(out, "cv_report.json", &report)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct BenchRow {
    method: &'static str,
    m_max: usize,
    lambda_count: usize,
    times_s: Vec<f64>,
    mean_s: f64,
    std_s: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

pub fn cmd_bench(config: &Config, seed: u64, out: &Path) -> CliResult<Value> {
    let reps = config.usize("bench.repetitions")?.unwrap_or(3);
    if reps == 0 {
        return Err(CliError::config("bench.repetitions", "must be >= 1"));
    }
    let p = prepare(config, seed)?;
    if p.spec.algo != Algorithm::Nkrls {
        return Err(CliError::config("algorithm.name", "bench compares incremental and naive nkrls surfaces; use nkrls"));
    }
    let lambdas = config.f64_grid("grid.lambda")?.ok_or_else(|| CliError::config("grid.lambda", "bench needs a lambda grid"))?;
    let ms = config.usize_grid("grid.m")?.ok_or_else(|| CliError::config("grid.m", "bench needs an m grid"))?;
    increasing("grid.m", &ms)?;
    let m_max = *ms.last().unwrap();
    let setup = surface_setup(&p, m_max, seed)?;
    let (mut inc, mut naive) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    let mut gap: f64 = 0.0;
    for _ in 0..reps {
        let a = surface_incremental(&setup, p.spec.kernel, &lambdas, &ms, seed, p.metric)?;
        let b = surface_naive(&setup, p.spec.kernel, &lambdas, &ms, seed, p.metric)?;
        inc.push(a.timings.total_s);
        naive.push(b.timings.total_s);
        for (ra, rb) in a.errors.iter().zip(&b.errors) {
            for (ea, eb) in ra.iter().zip(rb) {
                gap = gap.max((ea - eb).abs());
            }
        }
    }
    let row = |method, times: Vec<f64>| {
        let (mean_s, std_s) = mean_std(&times);
        BenchRow { method, m_max, lambda_count: lambdas.len(), times_s: times, mean_s, std_s }
    };
    let rows = vec![row("incremental", inc), row("naive", naive)];
    let speedup = rows[1].mean_s / rows[0].mean_s;
    let body = json!({
        "algorithm": "nkrls",
        "n_train": setup.x_train.nrows(),
        "m_grid": ms,
        "lambda_grid": lambdas,
        "repetitions": reps,
        "rows": rows,
        "speedup": speedup,
        "max_error_gap": gap,
    });
    let report = merge(header("bench", seed, config), body)?;
    write_report(out, "bench_report.json", &report)?;
    Ok(report)
}
