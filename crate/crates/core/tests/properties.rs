//! Statistical and end-to-end properties that span several modules.

use std::io::Write;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use specreg::data::{
    apply_standardize, load_csv, standardize, synth_gaussian_mixture_2d, synth_linear_regression, Design, MixtureSpec,
    TargetColumns, Task,
};
use specreg::exact::{DualModel, Predictor};
use specreg::kernels::KernelSpec;
use specreg::nystrom::{sample_uniform, NystromModel};
use specreg::persist::{from_json, to_json, SavedModel};
use specreg::random_features::sample_features;
use specreg::selection::{holdout_cv, log_grid, Hyper, Metric};
use specreg::sgm::{LossSpec, SgmRunner, StepSchedule};
use specreg::Result;

fn sign_error(scores: &Array1<f64>, y: &Array1<f64>) -> f64 {
    scores.iter().zip(y).filter(|(s, t)| **s * **t <= 0.0).count() as f64 / y.len() as f64
}

#[test]
fn sgm_test_error_bottoms_out_before_the_last_epoch() {
    let (n, epochs) = (100, 100);
    let spec = MixtureSpec { sigma_plus: 0.8, sigma_minus: 0.8, ..MixtureSpec::default() };
    let mut early = 0;
    for seed in 0..10u64 {
        let train = synth_gaussian_mixture_2d(n, &spec, seed).unwrap();
        let test = synth_gaussian_mixture_2d(2000, &spec, seed + 100).unwrap();
        let map = sample_features(2, 500, 0.2, seed + 200).unwrap();
        let (xt, xe) = (map.map(train.x.view()).unwrap(), map.map(test.x.view()).unwrap());
        let y = train.target_matrix().column(0).to_owned();
        let ye = test.target_matrix().column(0).to_owned();
        let sched = StepSchedule::new(1.0 / (n as f64).sqrt(), 0.0, 1.0).unwrap();
        let mut run = SgmRunner::new(xt.view(), y.view(), LossSpec::Hinge, sched, seed + 300).unwrap();
        let mut errors = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            for _ in 0..n {
                run.advance();
            }
            errors.push(sign_error(&xe.dot(run.iterate()), &ye));
        }
        let best = errors.iter().enumerate().fold(0, |b, (i, &e)| if e < errors[b] { i } else { b });
        if best < epochs - 1 {
            early += 1;
        }
    }
    assert!(early >= 7, "minimum before the last epoch in only {early}/10 seeds");
}

#[test]
fn holdout_selects_interior_lambda_for_krls() {
    let lambdas = log_grid(1e-9, 1e2, 23).unwrap();
    let grid: Vec<Hyper> = lambdas.iter().map(|&l| Hyper::lambda(l)).collect();
    let kernel = KernelSpec::Gaussian { sigma: 1.0 };
    let trainer = move |h: &Hyper, x: ArrayView2<f64>, y: ArrayView2<f64>| -> Result<Box<dyn Predictor + Send>> {
        Ok(Box::new(DualModel::fit_krls(kernel, Arc::new(x.to_owned()), y, h.lambda.unwrap())?))
    };
    let mut interior = 0;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Array1<f64> = (0..5).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ds = synth_linear_regression(250, w.view(), 1.0, Design::Random, 50 + seed).unwrap();
        let cv = holdout_cv(&trainer, &grid, ds.x.view(), ds.target_matrix().view(), 0.2, seed, Metric::Rmse).unwrap();
        let l = cv.best.lambda.unwrap();
        if l > lambdas[0] && l < lambdas[lambdas.len() - 1] {
            interior += 1;
        }
    }
    assert!(interior >= 8, "interior lambda in only {interior}/10 seeds");
}

#[test]
fn csv_to_saved_model_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "a,b,c,target").unwrap();
    for _ in 0..120 {
        let row: Vec<f64> = (0..3).map(|_| StandardNormal.sample(&mut rng)).collect();
        let target = 2.0 * row[0] - row[1] + 0.5 * (row[2] * 3.0).sin();
        writeln!(file, "{},{},{},{}", row[0] * 10.0, row[1], row[2] + 5.0, target).unwrap();
    }
    file.flush().unwrap();
    let ds = load_csv(file.path(), &TargetColumns::Last, true, Task::Regression).unwrap();
    assert_eq!(ds.names.as_deref(), Some(&["a".to_string(), "b".to_string(), "c".to_string()][..]));
    let (z, st) = standardize(&ds).unwrap();
    let centers = sample_uniform(z.len(), 40, 3).unwrap();
    let model = NystromModel::fit(KernelSpec::Gaussian { sigma: 1.5 }, z.x.view(), z.target_matrix().view(), &centers, 1e-4).unwrap();
    let fitted = model.predict(z.x.view()).unwrap();
    let rel = (&fitted - &z.target_matrix()).mapv(|v| v * v).sum() / z.target_matrix().mapv(|v| v * v).sum();
    assert!(rel < 0.05, "relative training error {rel}");

    let saved = SavedModel::Nystrom(model);
    let back = from_json(&to_json(&saved).unwrap()).unwrap();
    let probes = apply_standardize(&ds.subset(&[0, 5, 7]), &st).unwrap();
    let a: Array2<f64> = saved.predict(probes.x.view()).unwrap();
    assert_eq!(a, back.predict(probes.x.view()).unwrap());
}
