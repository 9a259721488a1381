use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndarray::Array1;
use serde_json::Value;
use specreg::data::{synth_gaussian_mixture_2d, synth_linear_regression, write_libsvm, Design, MixtureSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specreg"))
}

fn write_regression_csv(path: &Path, n: usize, seed: u64) {
    let w = Array1::from(vec![1.0, -2.0, 0.5]);
    let ds = synth_linear_regression(n, w.view(), 0.3, Design::Random, seed).unwrap();
    let y = ds.target_matrix();
    let mut text = String::from("x1,x2,x3,y\n");
    for (row, t) in ds.x.outer_iter().zip(y.column(0)) {
        writeln!(text, "{},{},{},{}", row[0], row[1], row[2], t).unwrap();
    }
    fs::write(path, text).unwrap();
}

fn write_mixture_libsvm(path: &Path, n: usize, seed: u64) {
    let ds = synth_gaussian_mixture_2d(n, &MixtureSpec::default(), seed).unwrap();
    write_libsvm(path, &ds).unwrap();
}

struct Run {
    dir: TempDir,
}

impl Run {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn exec(&self, cmd: &str, config: &Path, out: &str, extra: &[&str]) -> Output {
        bin()
            .arg(cmd)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.path(out))
            .args(extra)
            .output()
            .unwrap()
    }

    fn ok(&self, cmd: &str, config: &Path, out: &str, extra: &[&str]) -> Value {
        let o = self.exec(cmd, config, out, extra);
        assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_slice(&o.stdout).unwrap()
    }

    /// Runs a command expected to fail and returns the parsed stderr error.
    fn fail(&self, cmd: &str, config: &Path, extra: &[&str]) -> (i32, Value) {
        let o = self.exec(cmd, config, "out", extra);
        assert!(!o.status.success());
        let stderr = String::from_utf8_lossy(&o.stderr);
        let last = stderr.lines().last().unwrap();
        (o.status.code().unwrap(), serde_json::from_str(last).unwrap())
    }
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn krls_on_ten_points() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 10, 1);
    let cfg = r.config("c.conf", &format!("algorithm.name = krls\nalgorithm.lambda = 1e-3\ndata.train = {}\n", r.path("d.csv").display()));
    let rep = r.ok("train", &cfg, "out", &[]);
    assert!(r.path("out/model.json").is_file());
    assert!(r.path("out/train_report.json").is_file());
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["metric"], "rmse");
    assert!(f(&rep["metrics"]["train"]).is_finite());
}

#[test]
fn missing_data_path_is_a_config_error() {
    let r = Run::new();
    let cfg = r.config("c.conf", "algorithm.name = krls\nalgorithm.lambda = 1e-3\n");
    let (code, err) = r.fail("train", &cfg, &[]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["key"], "data.train");

    let cfg = r.config("c2.conf", "algorithm.name = krls\nalgorithm.lambda = 1e-3\ndata.train = /nonexistent/x.csv\n");
    let (_, err) = r.fail("train", &cfg, &[]);
    assert_eq!(err["error"]["key"], "data.train");
}

#[test]
fn bad_keys_and_algorithms_are_named() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 20, 1);
    let cfg = r.config("a.conf", &format!("algorithm.name = krls\nalgorithm.lamda = 1\ndata.train = {}\n", r.path("d.csv").display()));
    let (_, err) = r.fail("train", &cfg, &[]);
    assert_eq!(err["error"]["key"], "algorithm.lamda");
    let cfg = r.config("b.conf", &format!("algorithm.name = svm\ndata.train = {}\n", r.path("d.csv").display()));
    let (_, err) = r.fail("train", &cfg, &[]);
    assert_eq!(err["error"]["key"], "algorithm.name");
    let cfg = r.config("c.conf", &format!("algorithm.name = tsvd\ndata.train = {}\n", r.path("d.csv").display()));
    let (_, err) = r.fail("train", &cfg, &[]);
    assert_eq!(err["error"]["key"], "algorithm.lambda");
}

#[test]
fn same_seed_gives_identical_metrics() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 120, 2);
    let cfg = r.config(
        "c.conf",
        &format!("algorithm.name = nkrls\nalgorithm.lambda = 1e-4\nalgorithm.m = 20\ndata.train = {}\n", r.path("d.csv").display()),
    );
    let a = r.ok("train", &cfg, "a", &["--seed", "11"]);
    let b = r.ok("train", &cfg, "b", &["--seed", "11"]);
    assert_eq!(serde_json::to_string(&a["metrics"]).unwrap(), serde_json::to_string(&b["metrics"]).unwrap());
    assert_eq!(fs::read(r.path("a/model.json")).unwrap(), fs::read(r.path("b/model.json")).unwrap());
    let c = r.ok("train", &cfg, "c", &["--seed", "12"]);
    assert_ne!(a["metrics"], c["metrics"]);
}

#[test]
fn every_algorithm_trains() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 80, 3);
    write_mixture_libsvm(&r.path("m.libsvm"), 80, 3);
    let reg = format!("data.train = {}\n", r.path("d.csv").display());
    let cls = format!("data.train = {}\n", r.path("m.libsvm").display());
    let cases = [
        ("krls", "algorithm.lambda = 1e-3", &reg),
        ("kols", "algorithm.kernel = linear", &reg),
        ("rls", "algorithm.lambda = 1e-3", &reg),
        ("nkrls", "algorithm.lambda = 1e-3\nalgorithm.m = 10", &reg),
        ("nytro", "algorithm.m = 10\nalgorithm.t = 50\nalgorithm.stop = early", &reg),
        ("rf", "algorithm.lambda = 1e-3\nalgorithm.m = 50", &reg),
        ("sgm", "algorithm.loss = hinge\nalgorithm.features = 100\nalgorithm.epochs = 5", &cls),
        ("landweber", "algorithm.t = 30", &reg),
        ("tsvd", "algorithm.lambda = 1e-3", &reg),
        ("irlsc", "algorithm.lambda = 1\nalgorithm.alpha = auto\nalgorithm.min_count = 5", &cls),
    ];
    for (name, extra, data) in cases {
        let cfg = r.config(&format!("{name}.conf"), &format!("algorithm.name = {name}\n{extra}\n{data}"));
        let rep = r.ok("train", &cfg, name, &[]);
        let val = f(&rep["metrics"]["validation"]);
        assert!(val.is_finite(), "{name}: {rep}");
        if data == &cls {
            assert_eq!(rep["metric"], "misclassification");
            assert!(val < 0.35, "{name}: validation error {val}");
        }
    }
}

#[test]
fn predict_reproduces_the_training_report() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 60, 4);
    write_regression_csv(&r.path("t.csv"), 30, 5);
    let body = format!(
        "algorithm.name = rf\nalgorithm.lambda = 1e-4\nalgorithm.m = 80\ndata.standardize = true\ndata.train = {}\ndata.test = {}\n",
        r.path("d.csv").display(),
        r.path("t.csv").display()
    );
    let cfg = r.config("c.conf", &body);
    let train = r.ok("train", &cfg, "out", &["--seed", "3"]);
    assert!(r.path("out/standardizer.json").is_file());
    let model = r.path("out/model.json");
    let pred = r.ok("predict", &cfg, "pred", &["--model", model.to_str().unwrap()]);
    assert_eq!(pred["data"]["standardized"], true);
    assert_eq!(pred["predictions"].as_array().unwrap().len(), 30);
    assert_eq!(f(&pred["error"]), f(&train["metrics"]["test"]));
}

#[test]
fn classification_predictions_carry_labels() {
    let r = Run::new();
    write_mixture_libsvm(&r.path("m.libsvm"), 100, 6);
    write_mixture_libsvm(&r.path("t.libsvm"), 40, 7);
    let body = format!(
        "algorithm.name = krls\nalgorithm.lambda = 1e-2\ndata.train = {}\ndata.test = {}\n",
        r.path("m.libsvm").display(),
        r.path("t.libsvm").display()
    );
    let cfg = r.config("c.conf", &body);
    r.ok("train", &cfg, "out", &[]);
    let model = r.path("out/model.json");
    let pred = r.ok("predict", &cfg, "pred", &["--model", model.to_str().unwrap()]);
    let labels = pred["labels"].as_array().unwrap();
    assert_eq!(labels.len(), 40);
    assert!(labels.iter().all(|l| l == 1 || l == 2));
    assert!(f(&pred["error"]) < 0.3);
}

#[test]
fn path_two_by_two_grid_matches_train() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 150, 8);
    let data = format!("data.train = {}\n", r.path("d.csv").display());
    let cfg = r.config("p.conf", &format!("algorithm.name = nkrls\ngrid.lambda = 1e-4, 1e-2\ngrid.m = 15, 30\n{data}"));
    let rep = r.ok("path", &cfg, "path", &["--seed", "5"]);
    let entries = rep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    assert!(rep["surface"]["errors"].is_array());
    for lambda in [1e-4, 1e-2] {
        let cfg = r.config(
            "t.conf",
            &format!("algorithm.name = nkrls\nalgorithm.lambda = {lambda}\nalgorithm.m = 30\n{data}"),
        );
        let train = r.ok("train", &cfg, "train", &["--seed", "5"]);
        let entry = entries.iter().find(|e| f(&e["lambda"]) == lambda && e["m"] == 30).unwrap();
        let (a, b) = (f(&entry["validation_error"]), f(&train["metrics"]["validation"]));
        assert!((a - b).abs() <= 1e-6 * b, "lambda {lambda}: path {a}, train {b}");
    }
}

#[test]
fn landweber_and_nytro_paths_match_train_exactly() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 100, 9);
    let data = format!("data.train = {}\n", r.path("d.csv").display());
    let lw = r.ok("path", &r.config("l.conf", &format!("algorithm.name = landweber\ngrid.t_max = 40\n{data}")), "lp", &[]);
    assert_eq!(lw["entries"].as_array().unwrap().len(), 40);
    let ny = r.ok(
        "path",
        &r.config("n.conf", &format!("algorithm.name = nytro\nalgorithm.m = 20\ngrid.t = 5, 25\n{data}")),
        "np",
        &[],
    );
    for t in [7, 40] {
        let train = r.ok("train", &r.config("lt.conf", &format!("algorithm.name = landweber\nalgorithm.t = {t}\n{data}")), "lt", &[]);
        assert_eq!(f(&lw["entries"][t - 1]["validation_error"]), f(&train["metrics"]["validation"]));
    }
    let train = r.ok(
        "train",
        &r.config("nt.conf", &format!("algorithm.name = nytro\nalgorithm.m = 20\nalgorithm.t = 25\n{data}")),
        "nt",
        &[],
    );
    assert_eq!(f(&ny["entries"][1]["validation_error"]), f(&train["metrics"]["validation"]));
}

#[test]
fn generic_path_and_job_count_do_not_change_results() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 80, 10);
    let cfg = r.config(
        "c.conf",
        &format!("algorithm.name = krls\ngrid.lambda = log(1e-6, 1, 7)\ndata.train = {}\n", r.path("d.csv").display()),
    );
    let a = r.ok("path", &cfg, "a", &["--jobs", "1"]);
    let b = r.ok("path", &cfg, "b", &["--jobs", "3"]);
    assert_eq!(a["entries"].as_array().unwrap().len(), 7);
    assert_eq!(a["entries"], b["entries"]);
}

#[test]
fn empty_grid_is_a_config_error() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 30, 11);
    let cfg = r.config("c.conf", &format!("algorithm.name = krls\ngrid.lambda =\ndata.train = {}\n", r.path("d.csv").display()));
    let (code, err) = r.fail("path", &cfg, &[]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["key"], "grid.lambda");
    let cfg = r.config("d.conf", &format!("algorithm.name = krls\nalgorithm.lambda = 1\ndata.train = {}\n", r.path("d.csv").display()));
    let (_, err) = r.fail("path", &cfg, &[]);
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn cv_selects_from_the_table() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 100, 12);
    let data = format!("data.train = {}\n", r.path("d.csv").display());
    let hold = r.ok("cv", &r.config("h.conf", &format!("algorithm.name = krls\ngrid.lambda = log(1e-8, 10, 10)\n{data}")), "h", &[]);
    let table = hold["table"].as_array().unwrap();
    assert_eq!(table.len(), 10);
    let min = table.iter().map(|e| f(&e["validation_error"])).fold(f64::INFINITY, f64::min);
    assert_eq!(f(&hold["best_error"]), min);
    assert_eq!(hold["scheme"], "holdout");
    assert_eq!(hold["n"], 100);
    let folds = r.ok(
        "cv",
        &r.config("v.conf", &format!("algorithm.name = rf\nalgorithm.m = 40\ngrid.lambda = 1e-6, 1e-3\ngrid.folds = 5\n{data}")),
        "v",
        &[],
    );
    assert_eq!(folds["scheme"], "vfold");
    assert_eq!(folds["table"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_records_each_repetition() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 200, 13);
    let data = format!("data.train = {}\n", r.path("d.csv").display());
    let cfg = r.config("b.conf", &format!("algorithm.name = nkrls\ngrid.lambda = 1e-3, 1e-1\ngrid.m = 10, 20\nbench.repetitions = 3\n{data}"));
    let rep = r.ok("bench", &cfg, "b", &[]);
    let rows = rep["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["times_s"].as_array().unwrap().len(), 3);
        assert!(f(&row["std_s"]) >= 0.0);
    }
    assert!(f(&rep["max_error_gap"]) < 1e-6);

    let cfg = r.config("z.conf", &format!("algorithm.name = nkrls\ngrid.lambda = 1e-3\ngrid.m = 10\nbench.repetitions = 0\n{data}"));
    let (code, err) = r.fail("bench", &cfg, &[]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["key"], "bench.repetitions");
}

#[test]
fn bench_incremental_beats_naive_at_scale() {
    let r = Run::new();
    write_regression_csv(&r.path("d.csv"), 2500, 14);
    let cfg = r.config(
        "b.conf",
        &format!(
            "algorithm.name = nkrls\nalgorithm.sigma = 2\ngrid.lambda = log(1e-5, 1e-1, 3)\ngrid.m = linear(50, 250, 5)\nbench.repetitions = 1\ndata.train = {}\n",
            r.path("d.csv").display()
        ),
    );
    let rep = r.ok("bench", &cfg, "b", &[]);
    assert_eq!(rep["n_train"], 2000);
    let (inc, naive) = (f(&rep["rows"][0]["mean_s"]), f(&rep["rows"][1]["mean_s"]));
    assert!(inc < naive, "incremental {inc} s, naive {naive} s");
}

#[test]
fn usage_errors_are_json() {
    let o = bin().arg("train").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    let err: Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}
