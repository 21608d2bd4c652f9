//! Seeded sampling helpers. Every estimator in the crate draws from a
//! `ChaCha8Rng` seeded by the caller so results are reproducible.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform point in the Euclidean unit ball of `ℝⁿ`: normalized Gaussian
/// direction scaled by `u^{1/n}`.
pub fn unit_ball_point(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    loop {
        let mut dir = gaussian_vec(rng, n);
        let norm = libm::sqrt(dir.iter().map(|v| v * v).sum::<f64>());
        if norm < 1e-300 {
            continue;
        }
        let u: f64 = rng.random();
        let r = libm::pow(u, 1.0 / n as f64) / norm;
        dir.iter_mut().for_each(|v| *v *= r);
        return dir;
    }
}
