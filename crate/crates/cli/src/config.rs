//! Flat `key = value` configuration files.
//!
//! Keys carry a section prefix (`algorithm.`, `data.`, `grid.`, `bench.`).
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are rejected so that a typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use specreg::selection::{linear_grid, log_grid};

use crate::error::{CliError, CliResult};

pub const KNOWN_KEYS: &[&str] = &[
    "algorithm.name",
    "algorithm.kernel",
    "algorithm.sigma",
    "algorithm.degree",
    "algorithm.lambda",
    "algorithm.m",
    "algorithm.t",
    "algorithm.eta",
    "algorithm.gamma",
    "algorithm.loss",
    "algorithm.eta1",
    "algorithm.theta",
    "algorithm.epochs",
    "algorithm.features",
    "algorithm.average",
    "algorithm.alpha",
    "algorithm.min_count",
    "algorithm.stop",
    "algorithm.stop_threshold",
    "data.train",
    "data.test",
    "data.format",
    "data.task",
    "data.target",
    "data.header",
    "data.val_fraction",
    "data.standardize",
    "grid.lambda",
    "grid.m",
    "grid.t",
    "grid.t_max",
    "grid.folds",
    "bench.repetitions",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn bad(key: &str, msg: impl Into<String>) -> CliError {
    CliError::config(key, msg)
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config("", format!("line {}: expected `key = value`", i + 1)));
            };
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(bad(key, format!("unknown key on line {}", i + 1)));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(bad(key, format!("key repeated on line {}", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config("", format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require_str(&self, key: &str) -> CliResult<&str> {
        self.str(key).ok_or_else(|| bad(key, "required key is missing"))
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| bad(key, format!("expected {what}, got {v:?}"))),
        }
    }

    pub fn f64(&self, key: &str) -> CliResult<Option<f64>> {
        let v: Option<f64> = self.parsed(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(bad(key, "value must be finite")),
            _ => Ok(v),
        }
    }

    pub fn usize(&self, key: &str) -> CliResult<Option<usize>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn u32(&self, key: &str) -> CliResult<Option<u32>> {
        self.parsed(key, "a non-negative integer")
    }

    pub fn bool(&self, key: &str) -> CliResult<Option<bool>> {
        self.parsed(key, "true or false")
    }

    /// `a, b, c` or `log(lo, hi, count)`.
    pub fn f64_grid(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        let Some(v) = self.str(key) else { return Ok(None) };
        let grid = if let Some(args) = call_args(v, "log") {
            let [lo, hi, count] = three(key, &args)?;
            let (lo, hi) = (num::<f64>(key, lo)?, num::<f64>(key, hi)?);
            log_grid(lo, hi, num(key, count)?).map_err(|e| bad(key, e.to_string()))?
        } else {
            list(key, v)?
        };
        if grid.is_empty() {
            return Err(bad(key, "grid is empty"));
        }
        if grid.iter().any(|x| !x.is_finite()) {
            return Err(bad(key, "grid values must be finite"));
        }
        Ok(Some(grid))
    }

    /// `a, b, c` or `linear(lo, hi, count)`.
    pub fn usize_grid(&self, key: &str) -> CliResult<Option<Vec<usize>>> {
        let Some(v) = self.str(key) else { return Ok(None) };
        let grid = if let Some(args) = call_args(v, "linear") {
            let [lo, hi, count] = three(key, &args)?;
            linear_grid(num(key, lo)?, num(key, hi)?, num(key, count)?).map_err(|e| bad(key, e.to_string()))?
        } else {
            list(key, v)?
        };
        if grid.is_empty() {
            return Err(bad(key, "grid is empty"));
        }
        Ok(Some(grid))
    }
}

fn call_args<'a>(v: &'a str, name: &str) -> Option<Vec<&'a str>> {
    let inner = v.strip_prefix(name)?.trim_start().strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(str::trim).collect())
}

fn three<'a>(key: &str, args: &[&'a str]) -> CliResult<[&'a str; 3]> {
    match args {
        [a, b, c] => Ok([a, b, c]),
        _ => Err(bad(key, "expected three arguments (lo, hi, count)")),
    }
}

fn num<T: std::str::FromStr>(key: &str, s: &str) -> CliResult<T> {
    s.parse().map_err(|_| bad(key, format!("cannot parse {s:?}")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<Vec<T>> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}
