use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut rng))
}

pub fn random_pd(p: usize, seed: u64) -> Array2<f64> {
    let a = random_matrix(p, p, seed);
    a.dot(&a.t()) + Array2::<f64>::eye(p) * 0.5
}
