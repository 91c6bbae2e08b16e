//! Seeded synthetic data sets used by the test suites, the benchmarks and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::estimator::Dataset;

/// `x ~ U[-2, 2]`, `y = x^2 + noise * N(0, 1)`.
pub fn noisy_parabola(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(invalid(format!("noise level must be nonnegative, got {noise}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t: f64 = rng.random_range(-2.0..=2.0);
        let e: f64 = normal.sample(&mut rng);
        x.push(vec![t]);
        y.push(t * t + noise * e);
    }
    Dataset::new(x, y)
}

/// `x ~ U[0, 1]`, `y = x + (0.5 + x) * N(0, 1)`.
pub fn heteroscedastic_line(n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(invalid("sample size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let t: f64 = rng.random_range(0.0..=1.0);
        let e: f64 = normal.sample(&mut rng);
        x.push(vec![t]);
        y.push(t + (0.5 + t) * e);
    }
    Dataset::new(x, y)
}

/// Exact quantile of `y | x` for [`heteroscedastic_line`], given the standard normal quantile `z`.
pub fn heteroscedastic_quantile(x: f64, z: f64) -> f64 {
    x + (0.5 + x) * z
}
