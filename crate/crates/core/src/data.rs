//! Datasets: CSV and LIBSVM loaders, standardization, and synthetic
//! generators.
//!
//! Storage is dense. Classification labels are kept 1-based and contiguous;
//! the original label strings are recorded so files can be written back.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    /// `n x T` real targets.
    Regression(Array2<f64>),
    /// Labels in `1..=classes`; `label_names[c - 1]` is the original label of class `c`.
    Classification { labels: Vec<usize>, classes: usize, label_names: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub targets: Targets,
    pub names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, targets: Targets, names: Option<Vec<String>>) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Input("dataset has no rows".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("inputs contain non-finite values".into()));
        }
        match &targets {
            Targets::Regression(y) => {
                if y.nrows() != n {
                    return shape_err(format!("{} target rows for {n} inputs", y.nrows()));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Input("targets contain non-finite values".into()));
                }
            }
            Targets::Classification { labels, classes, label_names } => {
                if labels.len() != n {
                    return shape_err(format!("{} labels for {n} inputs", labels.len()));
                }
                if let Some(&l) = labels.iter().find(|&&l| l == 0 || l > *classes) {
                    return Err(Error::NonContiguousLabel { label: l, known: *classes });
                }
                if label_names.len() != *classes {
                    return shape_err(format!("{} label names for {classes} classes", label_names.len()));
                }
            }
        }
        if let Some(names) = &names {
            if names.len() != x.ncols() {
                return shape_err(format!("{} feature names for {} columns", names.len(), x.ncols()));
            }
        }
        Ok(Self { x, targets, names })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn task(&self) -> Task {
        match self.targets {
            Targets::Regression(_) => Task::Regression,
            Targets::Classification { .. } => Task::Classification,
        }
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classification { labels, .. } => Some(labels),
            Targets::Regression(_) => None,
        }
    }

    pub fn num_classes(&self) -> usize {
        match &self.targets {
            Targets::Classification { classes, .. } => *classes,
            Targets::Regression(y) => y.ncols(),
        }
    }

    /// Targets as a matrix: the regression targets, `±1` for two classes
    /// (class 2 positive), or one-hot columns otherwise.
    pub fn target_matrix(&self) -> Array2<f64> {
        match &self.targets {
            Targets::Regression(y) => y.clone(),
            Targets::Classification { labels, classes, .. } if *classes == 2 => {
                Array2::from_shape_fn((labels.len(), 1), |(i, _)| if labels[i] == 2 { 1.0 } else { -1.0 })
            }
            Targets::Classification { labels, classes, .. } => {
                Array2::from_shape_fn((labels.len(), *classes), |(i, j)| if labels[i] == j + 1 { 1.0 } else { 0.0 })
            }
        }
    }

    /// Rows `idx` in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let targets = match &self.targets {
            Targets::Regression(y) => Targets::Regression(y.select(Axis(0), idx)),
            Targets::Classification { labels, classes, label_names } => Targets::Classification {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
                label_names: label_names.clone(),
            },
        };
        Self { x: self.x.select(Axis(0), idx), targets, names: self.names.clone() }
    }

    pub fn metadata(&self, source: Option<String>) -> DatasetMeta {
        let label_names = match &self.targets {
            Targets::Classification { label_names, .. } => Some(label_names.clone()),
            Targets::Regression(_) => None,
        };
        DatasetMeta {
            n: self.len(),
            d: self.dim(),
            task: self.task(),
            outputs: self.num_classes(),
            label_names,
            feature_names: self.names.clone(),
            source,
        }
    }
}

/// Sidecar description of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub task: Task,
    /// Regression outputs or number of classes.
    pub outputs: usize,
    pub label_names: Option<Vec<String>>,
    pub feature_names: Option<Vec<String>>,
    pub source: Option<String>,
}

/// Writes `meta` as pretty JSON.
pub fn write_metadata(path: &Path, meta: &DatasetMeta) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<DatasetMeta> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Maps raw label strings to contiguous classes, ordered numerically when
/// every label parses as a number and lexically otherwise.
fn encode_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let mut names: Vec<String> = raw.to_vec();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(vals) = numeric {
        let mut pairs: Vec<(f64, String)> = vals.into_iter().zip(names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        names = pairs.into_iter().map(|(_, s)| s).collect();
        let keys: Vec<f64> = names.iter().map(|s| s.parse().unwrap()).collect();
        let labels = raw
            .iter()
            .map(|s| {
                let v: f64 = s.parse().unwrap();
                keys.iter().position(|&k| k == v).unwrap() + 1
            })
            .collect();
        return (labels, names);
    }
    let labels = raw.iter().map(|s| names.iter().position(|n| n == s).unwrap() + 1).collect();
    (labels, names)
}

/// Which CSV columns are targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetColumns {
    Last,
    Indices(Vec<usize>),
}

fn parse_cell(cell: &str, line: usize) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse { line, msg: format!("non-numeric cell {cell:?}") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value {cell:?}") });
    }
    Ok(v)
}

/// Loads a comma-separated file of numbers.
///
/// Classification targets must be a single column; its distinct values
/// become the classes.
pub fn load_csv(path: &Path, targets: &TargetColumns, has_header: bool, task: Task) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::Parse { line: 0, msg: format!("{}: {e}", path.display()) })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(has_header).flexible(true).from_reader(file);
    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        Some(h.iter().map(|s| s.trim().to_string()).collect())
    } else {
        None
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_targets: Vec<String> = Vec::new();
    let mut width: Option<usize> = header.as_ref().map(Vec::len);
    let mut target_idx: Vec<usize> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse { line, msg: format!("expected {w} columns, found {}", rec.len()) });
        }
        if target_idx.is_empty() {
            target_idx = match targets {
                TargetColumns::Last => vec![w - 1],
                TargetColumns::Indices(v) => v.clone(),
            };
            if target_idx.is_empty() || target_idx.iter().any(|&i| i >= w) || target_idx.len() >= w {
                return Err(Error::Parse { line, msg: format!("target columns {target_idx:?} invalid for {w} columns") });
            }
            if task == Task::Classification && target_idx.len() != 1 {
                return Err(Error::Parse { line, msg: "classification needs exactly one target column".into() });
            }
        }
        let mut row = Vec::with_capacity(w);
        for (j, cell) in rec.iter().enumerate() {
            if target_idx.contains(&j) && task == Task::Classification {
                parse_cell(cell, line)?;
                raw_targets.push(cell.trim().to_string());
            } else {
                row.push(parse_cell(cell, line)?);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 1, msg: "file has no data rows".into() });
    }
    let w = width.unwrap();
    let n = rows.len();
    let feature_cols: Vec<usize> = (0..w).filter(|j| !target_idx.contains(j)).collect();
    let names = header.map(|h| feature_cols.iter().map(|&j| h[j].clone()).collect());
    match task {
        Task::Regression => {
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let all = Array2::from_shape_vec((n, w), flat).map_err(|e| Error::Shape(e.to_string()))?;
            Dataset::new(all.select(Axis(1), &feature_cols), Targets::Regression(all.select(Axis(1), &target_idx)), names)
        }
        Task::Classification => {
            let flat: Vec<f64> = rows.into_iter().flatten().collect();
            let x = Array2::from_shape_vec((n, w - 1), flat).map_err(|e| Error::Shape(e.to_string()))?;
            let (labels, label_names) = encode_labels(&raw_targets);
            let classes = label_names.len();
            Dataset::new(x, Targets::Classification { labels, classes, label_names }, names)
        }
    }
}

/// Loads `label idx:val ...` lines (1-based, strictly increasing indices)
/// as a classification dataset.
pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    load_libsvm_as(path, Task::Classification)
}

pub fn load_libsvm_as(path: &Path, task: Task) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::Parse { line: 0, msg: format!("{}: {e}", path.display()) })?;
    let mut raw_labels = Vec::new();
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut parts = body.split_whitespace();
        let label = parts.next().unwrap();
        parse_cell(label, lineno)?;
        let mut row = Vec::new();
        let mut last = 0;
        for pair in parts {
            let (idx, val) = pair
                .split_once(':')
                .ok_or_else(|| Error::Parse { line: lineno, msg: format!("malformed pair {pair:?}") })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse { line: lineno, msg: format!("bad index in {pair:?}") })?;
            if idx == 0 || idx <= last {
                return Err(Error::Parse { line: lineno, msg: format!("index {idx} is not strictly increasing and 1-based") });
            }
            last = idx;
            row.push((idx, parse_cell(val, lineno)?));
        }
        d = d.max(last);
        raw_labels.push(label.to_string());
        entries.push(row);
    }
    if entries.is_empty() {
        return Err(Error::Parse { line: 1, msg: "file has no data rows".into() });
    }
    let mut x = Array2::zeros((entries.len(), d));
    for (i, row) in entries.iter().enumerate() {
        for &(j, v) in row {
            x[[i, j - 1]] = v;
        }
    }
    let targets = match task {
        Task::Classification => {
            let (labels, label_names) = encode_labels(&raw_labels);
            Targets::Classification { labels, classes: label_names.len(), label_names }
        }
        Task::Regression => {
            let y: Vec<f64> = raw_labels.iter().map(|s| s.parse().unwrap()).collect();
            Targets::Regression(Array2::from_shape_vec((y.len(), 1), y).map_err(|e| Error::Shape(e.to_string()))?)
        }
    };
    Dataset::new(x, targets, None)
}

/// Writes the dataset in LIBSVM format, omitting zero entries.
pub fn write_libsvm(path: &Path, ds: &Dataset) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for i in 0..ds.len() {
        let label = match &ds.targets {
            Targets::Classification { labels, label_names, .. } => label_names[labels[i] - 1].clone(),
            Targets::Regression(y) if y.ncols() == 1 => format!("{}", y[[i, 0]]),
            Targets::Regression(_) => return Err(Error::Format("LIBSVM holds a single target column".into())),
        };
        write!(out, "{label}")?;
        for (j, &v) in ds.x.row(i).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-feature affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    /// Sample standard deviation; 1 for constant features.
    pub std: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ndarray::ArrayView2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return param_err("standardization needs at least 2 rows");
        }
        let mean = x.mean_axis(Axis(0)).unwrap();
        let std = x.std_axis(Axis(0), 1.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return shape_err(format!("inputs have {} features, standardizer has {}", x.ncols(), self.mean.len()));
        }
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn invert(&self, z: ndarray::ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.mean.len() {
            return shape_err(format!("inputs have {} features, standardizer has {}", z.ncols(), self.mean.len()));
        }
        Ok(&z * &self.std + &self.mean)
    }
}

pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardizer)> {
    let st = Standardizer::fit(ds.x.view())?;
    Ok((apply_standardize(ds, &st)?, st))
}

pub fn apply_standardize(ds: &Dataset, st: &Standardizer) -> Result<Dataset> {
    Ok(Dataset { x: st.apply(ds.x.view())?, ..ds.clone() })
}

pub fn unstandardize(ds: &Dataset, st: &Standardizer) -> Result<Dataset> {
    Ok(Dataset { x: st.invert(ds.x.view())?, ..ds.clone() })
}

/// Parameters of the two-Gaussian generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// Probability of the `+1` class.
    pub gamma: f64,
    pub mu_plus: [f64; 2],
    pub mu_minus: [f64; 2],
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self { gamma: 0.5, mu_plus: [1.0, 0.0], mu_minus: [-1.0, 0.0], sigma_plus: 0.6, sigma_minus: 0.6 }
    }
}

/// `n` points: label `+1` with probability `γ` from `N(μ₊, σ₊²I)`, else `-1`
/// from `N(μ₋, σ₋²I)`. Classes are `1 ↔ -1` and `2 ↔ +1`.
pub fn synth_gaussian_mixture_2d(n: usize, spec: &MixtureSpec, seed: u64) -> Result<Dataset> {
    if !(spec.gamma > 0.0 && spec.gamma <= 1.0) {
        return param_err(format!("gamma must be in (0, 1], got {}", spec.gamma));
    }
    if !(spec.sigma_plus > 0.0 && spec.sigma_minus > 0.0) {
        return param_err("standard deviations must be > 0");
    }
    if n == 0 {
        return param_err("n must be >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let plus = rng.random_bool(spec.gamma);
        let (mu, sd) = if plus { (spec.mu_plus, spec.sigma_plus) } else { (spec.mu_minus, spec.sigma_minus) };
        for j in 0..2 {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = mu[j] + sd * z;
        }
        labels.push(if plus { 2 } else { 1 });
    }
    Dataset::new(
        x,
        Targets::Classification { labels, classes: 2, label_names: vec!["-1".into(), "+1".into()] },
        None,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// Deterministic points in `[-1, 1]^d`: an equispaced grid for `d = 1`
    /// and a Kronecker (Weyl) lattice otherwise.
    Fixed,
    /// Uniform on `[-1, 1]^d`.
    Random,
}

const WEYL_PRIMES: [f64; 16] = [2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0];

fn fixed_design(n: usize, d: usize) -> Array2<f64> {
    if d == 1 {
        let step = if n > 1 { 2.0 / (n - 1) as f64 } else { 0.0 };
        return Array2::from_shape_fn((n, 1), |(i, _)| -1.0 + step * i as f64);
    }
    Array2::from_shape_fn((n, d), |(i, j)| {
        let alpha = WEYL_PRIMES[j % WEYL_PRIMES.len()].sqrt() * (1 + j / WEYL_PRIMES.len()) as f64;
        2.0 * ((i + 1) as f64 * alpha).fract() - 1.0
    })
}

/// `y = X w* + ε` with `ε ~ N(0, σ²)`.
pub fn synth_linear_regression(n: usize, w_star: ArrayView1<f64>, noise_sigma: f64, design: Design, seed: u64) -> Result<Dataset> {
    if !(noise_sigma >= 0.0) {
        return param_err(format!("noise level must be >= 0, got {noise_sigma}"));
    }
    let d = w_star.len();
    if n == 0 || d == 0 {
        return param_err("need n >= 1 and d >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = match design {
        Design::Fixed => fixed_design(n, d),
        Design::Random => Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..=1.0)),
    };
    let mut y = x.dot(&w_star);
    if noise_sigma > 0.0 {
        let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        y.mapv_inplace(|v| v + noise.sample(&mut rng));
    }
    Dataset::new(x, Targets::Regression(y.insert_axis(Axis(1))), None)
}
