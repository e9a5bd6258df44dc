#![allow(dead_code)]

use mmi_core::instances::{log_uniform_spectrum, random_covariance};
use mmi_core::{CovarianceMatrix, Spectrum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIGMAS: [f64; 3] = [0.1, 1.0, 10.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn spectrum(rng: &mut ChaCha8Rng, n: usize) -> Spectrum {
    log_uniform_spectrum(rng, n, 1e-2, 1e2).unwrap()
}

pub fn covariance(rng: &mut ChaCha8Rng, n: usize) -> CovarianceMatrix {
    let s = log_uniform_spectrum(rng, n, 1e-1, 1e1).unwrap();
    random_covariance(rng, &s).unwrap()
}

pub fn sigma2(rng: &mut ChaCha8Rng) -> f64 {
    SIGMAS[rng.random_range(0..3)]
}

/// Budgets at zero, at every breakpoint, between them and beyond the last.
pub fn budgets_spanning(rho: &[f64], sigma2: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    for w in rho.windows(2) {
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend_from_slice(rho);
    let last = *rho.last().unwrap();
    out.push(last + sigma2);
    out.push(2.0 * last + 10.0 * sigma2);
    out
}
