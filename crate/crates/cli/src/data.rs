//! Dataset loading, splitting and standardization as configured by `data.*`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use specreg::data::{apply_standardize, load_csv, load_libsvm_as, Dataset, Standardizer, TargetColumns, Task};
use specreg::selection::{holdout_split, Metric};

use crate::config::Config;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone)]
pub struct DataSpec {
    format: Option<Format>,
    task: Option<Task>,
    target: TargetColumns,
    header: bool,
    pub val_fraction: f64,
    pub standardize: bool,
}

impl DataSpec {
    pub fn from_config(c: &Config) -> CliResult<Self> {
        let format = match c.str("data.format") {
            None => None,
            Some("csv") => Some(Format::Csv),
            Some("libsvm") => Some(Format::Libsvm),
            Some(other) => return Err(CliError::config("data.format", format!("expected csv or libsvm, got {other:?}"))),
        };
        let task = match c.str("data.task") {
            None => None,
            Some("regression") => Some(Task::Regression),
            Some("classification") => Some(Task::Classification),
            Some(other) => {
                return Err(CliError::config("data.task", format!("expected regression or classification, got {other:?}")))
            }
        };
        let target = match c.str("data.target") {
            None | Some("last") => TargetColumns::Last,
            Some(v) => TargetColumns::Indices(
                v.split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|_| CliError::config("data.target", format!("expected `last` or column indices, got {v:?}")))?,
            ),
        };
        let val_fraction = c.f64("data.val_fraction")?.unwrap_or(0.2);
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(CliError::config("data.val_fraction", "must be in [0, 1)"));
        }
        Ok(Self {
            format,
            task,
            target,
            header: c.bool("data.header")?.unwrap_or(true),
            val_fraction,
            standardize: c.bool("data.standardize")?.unwrap_or(false),
        })
    }

    /// Loads the file named by config key `key`.
    pub fn load(&self, c: &Config, key: &str) -> CliResult<(PathBuf, Dataset)> {
        let path = PathBuf::from(c.require_str(key)?);
        if !path.is_file() {
            return Err(CliError::config(key, format!("no such file: {}", path.display())));
        }
        let ds = self.load_path(&path)?;
        Ok((path, ds))
    }

    fn load_path(&self, path: &Path) -> CliResult<Dataset> {
        let format = match self.format {
            Some(f) => f,
            None => match path.extension().and_then(|e| e.to_str()) {
                Some("csv") => Format::Csv,
                Some("libsvm" | "svm") => Format::Libsvm,
                _ => return Err(CliError::config("data.format", format!("cannot infer the format of {}", path.display()))),
            },
        };
        Ok(match format {
            Format::Csv => load_csv(path, &self.target, self.header, self.task.unwrap_or(Task::Regression))?,
            Format::Libsvm => load_libsvm_as(path, self.task.unwrap_or(Task::Classification))?,
        })
    }
}

pub fn metric_for(task: Task) -> Metric {
    match task {
        Task::Regression => Metric::Rmse,
        Task::Classification => Metric::Misclassification,
    }
}

/// Training and validation blocks after the optional standardization.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub standardizer: Option<Standardizer>,
}

impl Split {
    /// Hold-out split drawn from `seed`; the standardizer is fit on the training block only.
    pub fn new(ds: &Dataset, spec: &DataSpec, seed: u64) -> CliResult<Self> {
        let (train, val) = if spec.val_fraction > 0.0 {
            let (tr, va) = holdout_split(ds.len(), spec.val_fraction, seed)?;
            (ds.subset(&tr), Some(ds.subset(&va)))
        } else {
            (ds.clone(), None)
        };
        if train.is_empty() {
            return Err(CliError::config("data.val_fraction", "training block is empty"));
        }
        if !spec.standardize {
            return Ok(Self { train, val, standardizer: None });
        }
        let st = Standardizer::fit(train.x.view())?;
        let train = apply_standardize(&train, &st)?;
        let val = val.map(|v| apply_standardize(&v, &st)).transpose()?;
        Ok(Self { train, val, standardizer: Some(st) })
    }

    pub fn y_train(&self) -> Array2<f64> {
        self.train.target_matrix()
    }
}
