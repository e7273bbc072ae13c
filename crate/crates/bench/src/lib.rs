//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regrowth::nn::Tensor;

/// Uniform values in `[-1, 1)` of the given shape.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// A 25-step logistic recovery curve.
pub fn recovery_curve(l: f64, k: f64, t0: f64) -> Vec<f64> {
    (0..25).map(|t| l / (1.0 + (-k * (t as f64 - t0)).exp())).collect()
}
