//! Independent checks on the closed forms.
//!
//! [`exact_linear_mi`] evaluates `½ ln det(I + W Σ Wᵀ / σ²)` for an arbitrary
//! weight matrix, [`build_optimal_weights`] constructs a matrix that attains
//! the closed-form value, and [`maximize_mi`] searches for the maximum
//! numerically by projected gradient ascent on the Frobenius ball, without
//! using the water-filling solution at all.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MmiError, Result};
use crate::rng::{substream, Domain};
use crate::spectrum::{BlockCovariance, CovarianceMatrix, Eigendecomposition};
use crate::waterfill::solve_waterfill;

/// An `N1 x N0` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    pub fn zeros(n1: usize, n0: usize) -> Self {
        Self::new(DMatrix::zeros(n1, n0))
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    /// `Tr(WᵀW)`
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop once the projected-gradient step norm falls below this.
    pub tolerance: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            step_size: 0.1,
            tolerance: 1e-8,
            seed: 0,
            restarts: 5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || self.restarts == 0
            || !(self.step_size.is_finite() && self.step_size > 0.0)
            || !(self.tolerance.is_finite() && self.tolerance > 0.0)
        {
            return Err(MmiError::InvalidParameter(format!(
                "invalid optimizer config {self:?}"
            )));
        }
        Ok(())
    }
}

/// Best weights found over all restarts.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOutcome {
    pub weights: WeightMatrix,
    pub achieved_nats: f64,
    /// `false` when the best restart exhausted `max_iters` with its
    /// projected-gradient norm still above tolerance.
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(MmiError::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    Ok(())
}

fn check_budget(f: f64) -> Result<()> {
    if f.is_nan() || f < 0.0 {
        return Err(MmiError::NegativeBudget(f));
    }
    Ok(())
}

fn check_conforms(w: &DMatrix<f64>, cov: &CovarianceMatrix) -> Result<()> {
    if w.ncols() != cov.dim() {
        return Err(MmiError::DimensionMismatch(format!(
            "weights have {} columns but the input has dimension {}",
            w.ncols(),
            cov.dim()
        )));
    }
    Ok(())
}

/// `I + W Σ Wᵀ / σ²`
fn information_matrix(w: &DMatrix<f64>, sigma: &DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    let n1 = w.nrows();
    let mut m = w * sigma * w.transpose() / sigma2;
    for i in 0..n1 {
        m[(i, i)] += 1.0;
    }
    // exact symmetry for the factorization
    (&m + m.transpose()) * 0.5
}

fn half_log_det(w: &DMatrix<f64>, sigma: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if w.nrows() == 0 {
        return Ok(0.0);
    }
    let chol = information_matrix(w, sigma, sigma2)
        .cholesky()
        .ok_or_else(|| MmiError::Numerical("I + WΣWᵀ/σ² lost positive definiteness".into()))?;
    Ok(chol.l().diagonal().iter().map(|d| d.ln()).sum())
}

/// `I(X; WX + b + η) = ½ ln det(I + W Σ Wᵀ / σ²)` in nats. The bias has no
/// effect and is not a parameter.
pub fn exact_linear_mi(w: &WeightMatrix, cov: &CovarianceMatrix, sigma2: f64) -> Result<f64> {
    check_sigma2(sigma2)?;
    check_conforms(&w.entries, cov)?;
    half_log_det(&w.entries, cov.matrix(), sigma2)
}

/// `∂/∂W ½ ln det(I + W Σ Wᵀ / σ²) = (I + W Σ Wᵀ/σ²)⁻¹ W Σ / σ²`.
pub fn linear_mi_gradient(
    w: &WeightMatrix,
    cov: &CovarianceMatrix,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    check_sigma2(sigma2)?;
    check_conforms(&w.entries, cov)?;
    gradient(&w.entries, cov.matrix(), sigma2)
}

fn gradient(w: &DMatrix<f64>, sigma: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    let chol = information_matrix(w, sigma, sigma2)
        .cholesky()
        .ok_or_else(|| MmiError::Numerical("I + WΣWᵀ/σ² lost positive definiteness".into()))?;
    Ok(chol.solve(&(w * sigma)) / sigma2)
}

/// `W = diag(√λ̃) U_Ñᵀ`, padded with zero rows up to `n1`: shares the
/// eigenvectors of `Σ` and spends the water-filling allocation on them.
pub fn build_optimal_weights(
    f: f64,
    eigen: &Eigendecomposition,
    sigma2: f64,
    n1: usize,
) -> Result<WeightMatrix> {
    if n1 == 0 {
        return Err(MmiError::InvalidParameter("N1 must be at least 1".into()));
    }
    let n0 = eigen.spectrum.len();
    let n_tilde = n0.min(n1);
    let solution = solve_waterfill(f, &eigen.spectrum, sigma2, n_tilde)?;
    let mut w = DMatrix::zeros(n1, n0);
    for (i, &alloc) in solution.allocations.iter().enumerate() {
        if alloc > 0.0 {
            let row = eigen.vectors.column(i).transpose() * alloc.sqrt();
            w.row_mut(i).copy_from(&row);
        }
    }
    Ok(WeightMatrix::new(w))
}

fn random_on_sphere<R: Rng>(rng: &mut R, rows: usize, cols: usize, f: f64) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm_sq = w.norm_squared();
    if norm_sq > 0.0 {
        w *= (f / norm_sq).sqrt();
    }
    w
}

/// Radial projection onto `{Tr(WᵀW) ≤ F}`, the exact Euclidean projection
/// for a Frobenius ball.
fn project(mut w: DMatrix<f64>, f: f64) -> DMatrix<f64> {
    let norm_sq = w.norm_squared();
    if norm_sq > f {
        w *= (f / norm_sq).sqrt();
    }
    w
}

struct Ascent {
    params: DMatrix<f64>,
    value: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

fn projected_ascent(
    start: DMatrix<f64>,
    f: f64,
    config: &OptimizerConfig,
    objective: &(dyn Fn(&DMatrix<f64>) -> Result<f64> + Sync),
    grad: &(dyn Fn(&DMatrix<f64>) -> Result<DMatrix<f64>> + Sync),
) -> Result<Ascent> {
    let mut params = project(start, f);
    let mut value = objective(&params)?;
    let mut gradient_norm = f64::INFINITY;
    for iteration in 0..config.max_iters {
        let g = grad(&params)?;
        let mut step = config.step_size;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = project(&params + &g * step, f);
            let cand_value = objective(&candidate)?;
            let ascent = (&candidate - &params).dot(&g);
            if cand_value >= value + ARMIJO * ascent {
                accepted = Some((candidate, cand_value, step));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, cand_value, step)) = accepted else {
            // No step improves the objective at machine precision.
            return Ok(Ascent {
                params,
                value,
                converged: gradient_norm <= config.tolerance,
                iterations: iteration,
                gradient_norm,
            });
        };
        gradient_norm = (&candidate - &params).norm() / step;
        params = candidate;
        value = cand_value;
        if gradient_norm <= config.tolerance {
            return Ok(Ascent {
                params,
                value,
                converged: true,
                iterations: iteration + 1,
                gradient_norm,
            });
        }
    }
    Ok(Ascent {
        params,
        value,
        converged: false,
        iterations: config.max_iters,
        gradient_norm,
    })
}

fn best_of_restarts(
    rows: usize,
    cols: usize,
    f: f64,
    config: &OptimizerConfig,
    objective: &(dyn Fn(&DMatrix<f64>) -> Result<f64> + Sync),
    grad: &(dyn Fn(&DMatrix<f64>) -> Result<DMatrix<f64>> + Sync),
) -> Result<Ascent> {
    config.validate()?;
    check_budget(f)?;
    if f == 0.0 {
        return Ok(Ascent {
            params: DMatrix::zeros(rows, cols),
            value: 0.0,
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
        });
    }
    let runs: Vec<Ascent> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(config.seed, Domain::OptimizerRestart, r as u64);
            let start = random_on_sphere(&mut rng, rows, cols, f);
            projected_ascent(start, f, config, objective, grad)
        })
        .collect::<Result<_>>()?;
    // Ties resolve to the lowest restart index, independent of scheduling.
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one restart");
    Ok(best)
}

/// Maximizes `I(X; Z)` over `Tr(WᵀW) ≤ F` numerically.
pub fn maximize_mi(
    f: f64,
    cov: &CovarianceMatrix,
    sigma2: f64,
    n1: usize,
    config: &OptimizerConfig,
) -> Result<OptimizerOutcome> {
    check_sigma2(sigma2)?;
    if n1 == 0 {
        return Err(MmiError::InvalidParameter("N1 must be at least 1".into()));
    }
    let sigma = cov.matrix();
    let objective = |w: &DMatrix<f64>| half_log_det(w, sigma, sigma2);
    let grad = |w: &DMatrix<f64>| gradient(w, sigma, sigma2);
    let best = best_of_restarts(n1, cov.dim(), f, config, &objective, &grad)?;
    Ok(OptimizerOutcome {
        weights: WeightMatrix::new(best.params),
        achieved_nats: best.value,
        converged: best.converged,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
    })
}

/// Block-diagonal `W̃` with `repetitions` copies of `filter` on the diagonal.
pub fn tied_conv_weights(filter: &DMatrix<f64>, repetitions: usize) -> WeightMatrix {
    let (nf, nb) = filter.shape();
    let mut w = DMatrix::zeros(nf * repetitions, nb * repetitions);
    for r in 0..repetitions {
        w.view_mut((r * nf, r * nb), (nf, nb)).copy_from(filter);
    }
    WeightMatrix::new(w)
}

/// Maximizes the MI of the tied convolutional channel over a single
/// `N_f x N_B` filter with `Tr(WᵀW) ≤ F`, evaluating the full
/// `N0`-dimensional channel at every step. Returns the filter.
pub fn maximize_mi_conv(
    f: f64,
    block: &BlockCovariance,
    n_f: usize,
    sigma2: f64,
    config: &OptimizerConfig,
) -> Result<OptimizerOutcome> {
    check_sigma2(sigma2)?;
    if n_f == 0 {
        return Err(MmiError::InvalidParameter("N_f must be at least 1".into()));
    }
    let full = block.full();
    let sigma = full.matrix();
    let reps = block.repetitions();
    let nb = block.block_size();
    let objective =
        |p: &DMatrix<f64>| half_log_det(tied_conv_weights(p, reps).entries(), sigma, sigma2);
    let grad = |p: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let full_grad = gradient(tied_conv_weights(p, reps).entries(), sigma, sigma2)?;
        // chain rule through the tying: sum the diagonal blocks
        let mut g = DMatrix::zeros(n_f, nb);
        for r in 0..reps {
            g += full_grad.view((r * n_f, r * nb), (n_f, nb));
        }
        Ok(g)
    };
    let best = best_of_restarts(n_f, nb, f, config, &objective, &grad)?;
    Ok(OptimizerOutcome {
        weights: WeightMatrix::new(best.params),
        achieved_nats: best.value,
        converged: best.converged,
        iterations: best.iterations,
        gradient_norm: best.gradient_norm,
    })
}

fn numerical_rank(
    w: &DMatrix<f64>,
) -> (
    usize,
    Option<nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>>,
) {
    if w.is_empty() || w.amax() == 0.0 {
        return (0, None);
    }
    let svd = w.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let tol = s_max * w.nrows().max(w.ncols()) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    (rank, Some(svd))
}

/// Splits `w` into layer matrices `[W_1, …, W_K]` with output widths
/// `widths` whose product `W_K⋯W_1` reproduces `w`.
pub fn factor_through_widths(w: &DMatrix<f64>, widths: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    if widths.is_empty() {
        return Err(MmiError::InvalidParameter(
            "need at least one layer width".into(),
        ));
    }
    let (rank, svd) = numerical_rank(w);
    if let Some(&width) = widths.iter().filter(|&&wd| wd < rank).min() {
        return Err(MmiError::InfeasibleFactorization { rank, width });
    }
    let (n1, n0) = w.shape();
    if widths[widths.len() - 1] != n1 {
        return Err(MmiError::DimensionMismatch(format!(
            "last layer width {} differs from the {n1} rows of the weight matrix",
            widths[widths.len() - 1]
        )));
    }
    if widths.len() == 1 {
        return Ok(vec![w.clone()]);
    }

    // w = A B with A = U_r S_r (n1 x r) and B = V_rᵀ (r x n0)
    let (a, b) = match svd {
        Some(svd) => {
            let u = svd.u.as_ref().expect("requested U");
            let v_t = svd.v_t.as_ref().expect("requested Vᵀ");
            let mut a = DMatrix::zeros(n1, rank);
            let mut kept = 0;
            let mut b = DMatrix::zeros(rank, n0);
            let tol = svd.singular_values.max() * n1.max(n0) as f64 * f64::EPSILON;
            for (i, &s) in svd.singular_values.iter().enumerate() {
                if s > tol {
                    a.column_mut(kept).copy_from(&(u.column(i) * s));
                    b.row_mut(kept).copy_from(&v_t.row(i));
                    kept += 1;
                }
            }
            (a, b)
        }
        None => (DMatrix::zeros(n1, 0), DMatrix::zeros(0, n0)),
    };

    // E_j = [I_r; 0] embeds the rank-r code into a layer of width w_j.
    let embed = |width: usize| DMatrix::from_fn(width, rank, |i, j| if i == j { 1.0 } else { 0.0 });
    let k = widths.len();
    let mut layers = Vec::with_capacity(k);
    layers.push(embed(widths[0]) * &b);
    for j in 1..k - 1 {
        layers.push(embed(widths[j]) * embed(widths[j - 1]).transpose());
    }
    layers.push(&a * embed(widths[k - 2]).transpose());
    Ok(layers)
}

/// `W_K⋯W_1`
pub fn layer_product(layers: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut iter = layers.iter();
    let first = iter.next().expect("non-empty layer list").clone();
    iter.fold(first, |acc, layer| layer * acc)
}

/// Factors `w_opt` through a stack with the given widths and returns the
/// exact MI of the reassembled end-to-end product.
pub fn factor_check_multilayer(
    w_opt: &WeightMatrix,
    widths: &[usize],
    cov: &CovarianceMatrix,
    sigma2: f64,
) -> Result<f64> {
    check_conforms(w_opt.entries(), cov)?;
    let layers = factor_through_widths(w_opt.entries(), widths)?;
    exact_linear_mi(&WeightMatrix::new(layer_product(&layers)), cov, sigma2)
}
