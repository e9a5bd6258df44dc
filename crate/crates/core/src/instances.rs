//! Random problem instances for verification runs and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::spectrum::{CovarianceMatrix, Spectrum};

/// `n` eigenvalues drawn log-uniformly from `[lo, hi]`.
pub fn log_uniform_spectrum<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Result<Spectrum> {
    let (a, b) = (lo.ln(), hi.ln());
    Spectrum::new((0..n).map(|_| rng.random_range(a..=b).exp()).collect())
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // fix column signs so the distribution does not depend on QR conventions
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(λ) Qᵀ` for a random orthogonal `Q`.
pub fn random_covariance<R: Rng>(rng: &mut R, spectrum: &Spectrum) -> Result<CovarianceMatrix> {
    let n = spectrum.len();
    let q = random_orthogonal(rng, n);
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(spectrum.values()));
    let m = &q * d * q.transpose();
    CovarianceMatrix::new((&m + m.transpose()) * 0.5)
}

/// Gaussian `rows x cols` matrix rescaled to `Tr(WᵀW) = f`.
pub fn random_weights<R: Rng>(rng: &mut R, rows: usize, cols: usize, f: f64) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm_sq = w.norm_squared();
    if norm_sq > 0.0 {
        w *= (f / norm_sq).sqrt();
    }
    w
}
