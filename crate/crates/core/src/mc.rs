//! Monte-Carlo verification of the activation results.
//!
//! Given `X ~ N(0, Σ)` and a channel `Z = m(X) + η`, `η ~ N(0, σ² I)`, the
//! marginal density of `Z` is exactly the Gaussian mixture `E_X[N(z; m(X), σ² I)]`.
//! The entropy estimator draws `n_outer` points `z_j` from the channel and
//! scores each against a mixture built from `n_inner` independent input
//! draws:
//!
//! ```text
//! Ĥ(Z) = −(1/n_outer) Σ_j ln[(1/n_inner) Σ_i N(z_j; m(x_i), σ² I)]
//! ```
//!
//! evaluated in log-sum-exp form. Every sample is drawn from a substream keyed
//! by its index, so estimates are bit-identical for any thread count.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{MmiError, Result};
use crate::mmi::{mmi_fc, ChannelParams};
use crate::oracle::{build_optimal_weights, WeightMatrix};
use crate::rng::{substream, Domain};
use crate::spectrum::CovarianceMatrix;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Sample sizes and seed for every Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MCConfig {
    /// Points at which the marginal density of `Z` is evaluated.
    pub n_outer: usize,
    /// Mixture components per density evaluation.
    pub n_inner: usize,
    pub seed: u64,
}

impl MCConfig {
    pub const MIN_SAMPLES: usize = 100;

    pub fn new(n_outer: usize, n_inner: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_outer,
            n_inner,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_outer < Self::MIN_SAMPLES || self.n_inner < Self::MIN_SAMPLES {
            return Err(MmiError::InvalidParameter(format!(
                "n_outer and n_inner must be at least {}, got {} and {}",
                Self::MIN_SAMPLES,
                self.n_outer,
                self.n_inner
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    /// Nats.
    pub value: f64,
    pub std_error: f64,
    pub config: MCConfig,
}

/// Coordinatewise strictly increasing differentiable activation.
#[derive(Debug, Clone, Copy)]
pub enum BijectiveActivation {
    Tanh,
    Custom {
        forward: fn(f64) -> f64,
        /// `ln φ'(a)`
        log_derivative: fn(f64) -> f64,
    },
}

impl BijectiveActivation {
    pub fn apply(&self, a: f64) -> f64 {
        match self {
            Self::Tanh => a.tanh(),
            Self::Custom { forward, .. } => forward(a),
        }
    }

    pub fn log_derivative(&self, a: f64) -> f64 {
        match self {
            // ln(1 − tanh² a) = ln 4 − 2|a| − 2 ln(1 + e^{−2|a|}), stable for large |a|
            Self::Tanh => {
                let x = a.abs();
                std::f64::consts::LN_2 * 2.0 - 2.0 * x - 2.0 * (-2.0 * x).exp().ln_1p()
            }
            Self::Custom { log_derivative, .. } => log_derivative(a),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ChannelKind {
    /// `Z = Wx + b + η`
    Linear,
    /// `Z = relu(Wx + b) + η`
    Relu,
    /// `Z = φ(Wx + b + η)`: noise on the pre-activation.
    Bijective(BijectiveActivation),
}

/// A noisy single-layer channel.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub weights: WeightMatrix,
    pub bias: DVector<f64>,
    pub sigma2: f64,
    pub kind: ChannelKind,
}

impl ChannelModel {
    pub fn new(
        weights: WeightMatrix,
        bias: DVector<f64>,
        sigma2: f64,
        kind: ChannelKind,
    ) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(MmiError::DimensionMismatch(format!(
                "bias has length {} but W has {} rows",
                bias.len(),
                weights.rows()
            )));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(MmiError::InvalidParameter(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            weights,
            bias,
            sigma2,
            kind,
        })
    }

    /// Zero-bias linear channel.
    pub fn linear(weights: WeightMatrix, sigma2: f64) -> Result<Self> {
        let n1 = weights.rows();
        Self::new(weights, DVector::zeros(n1), sigma2, ChannelKind::Linear)
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Centre of the Gaussian conditional: `Wx + b`, passed through relu for
    /// relu channels. Bijective channels use the pre-activation.
    fn centre(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut m = self.weights.entries() * x + &self.bias;
        if let ChannelKind::Relu = self.kind {
            m.apply(|v| *v = v.max(0.0));
        }
        m
    }
}

/// The relu channel `Z = relu(Wx + b) + η`.
#[derive(Debug, Clone)]
pub struct ReluModel {
    pub weights: WeightMatrix,
    pub bias: DVector<f64>,
    pub sigma2: f64,
}

impl ReluModel {
    pub fn new(weights: WeightMatrix, bias: DVector<f64>, sigma2: f64) -> Result<Self> {
        ChannelModel::new(weights.clone(), bias.clone(), sigma2, ChannelKind::Relu)?;
        Ok(Self {
            weights,
            bias,
            sigma2,
        })
    }

    pub fn relu_channel(&self) -> ChannelModel {
        ChannelModel {
            weights: self.weights.clone(),
            bias: self.bias.clone(),
            sigma2: self.sigma2,
            kind: ChannelKind::Relu,
        }
    }

    /// Same weights and bias without the activation.
    pub fn linear_channel(&self) -> ChannelModel {
        ChannelModel {
            kind: ChannelKind::Linear,
            ..self.relu_channel()
        }
    }
}

fn lower_factor(cov: &CovarianceMatrix) -> Result<DMatrix<f64>> {
    let chol = cov
        .matrix()
        .clone()
        .cholesky()
        .ok_or(MmiError::NotPositiveDefinite {
            min_eigenvalue: cov.eigen().spectrum.values()[cov.dim() - 1],
            max_eigenvalue: cov.eigen().spectrum.values()[0],
        })?;
    Ok(chol.unpack())
}

fn standard_normal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

fn draw_input(l: &DMatrix<f64>, seed: u64, domain: Domain, index: usize) -> DVector<f64> {
    let mut rng = substream(seed, domain, index as u64);
    l * standard_normal(&mut rng, l.nrows())
}

fn draw_noise(n1: usize, sigma: f64, seed: u64, domain: Domain, index: usize) -> DVector<f64> {
    let mut rng = substream(seed, domain, index as u64);
    standard_normal(&mut rng, n1) * sigma
}

/// `n` draws of `X ~ N(0, Σ)` as rows, via the Cholesky factor of `Σ`.
pub fn sample_gaussian_inputs(cov: &CovarianceMatrix, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let l = lower_factor(cov)?;
    let rows: Vec<DVector<f64>> = (0..n)
        .into_par_iter()
        .map(|i| draw_input(&l, seed, Domain::InputSamples, i))
        .collect();
    let mut out = DMatrix::zeros(n, cov.dim());
    for (i, row) in rows.iter().enumerate() {
        out.row_mut(i).copy_from(&row.transpose());
    }
    Ok(out)
}

/// `ln (1/n) Σ_i exp(−|z − c_i|² / 2σ²)` minus the Gaussian normaliser.
fn log_mixture_density(
    z: &[f64],
    centres: &[f64],
    sigma2: f64,
    scratch: &mut Vec<f64>,
) -> Result<f64> {
    let dim = z.len();
    let n = centres.len() / dim;
    let scale = -0.5 / sigma2;
    scratch.clear();
    let mut max = f64::NEG_INFINITY;
    for c in centres.chunks_exact(dim) {
        let d2: f64 = z.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        let e = scale * d2;
        max = max.max(e);
        scratch.push(e);
    }
    if !max.is_finite() {
        return Err(MmiError::NumericalUnderflow);
    }
    let sum: f64 = scratch.iter().map(|e| (e - max).exp()).sum();
    Ok(max + sum.ln() - (n as f64).ln() - 0.5 * dim as f64 * (LN_2PI + sigma2.ln()))
}

fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Per-outer-point entropy contributions `−ln p̂(z_j)` (plus the Jacobian
/// term for bijective channels).
fn entropy_terms(model: &ChannelModel, cov: &CovarianceMatrix, mc: &MCConfig) -> Result<Vec<f64>> {
    mc.validate()?;
    if model.weights.cols() != cov.dim() {
        return Err(MmiError::DimensionMismatch(format!(
            "W has {} columns but the input has dimension {}",
            model.weights.cols(),
            cov.dim()
        )));
    }
    let l = lower_factor(cov)?;
    let n1 = model.output_dim();
    let sigma = model.sigma2.sqrt();

    let centres: Vec<f64> = (0..mc.n_inner)
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = draw_input(&l, mc.seed, Domain::InnerInputs, i);
            let v: Vec<f64> = model.centre(&x).data.into();
            v
        })
        .collect();

    (0..mc.n_outer)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(mc.n_inner),
            |scratch, j| {
                let x = draw_input(&l, mc.seed, Domain::OuterInputs, j);
                let eta = draw_noise(n1, sigma, mc.seed, Domain::OuterNoise, j);
                let point = model.centre(&x) + eta;
                let h = -log_mixture_density(point.as_slice(), &centres, model.sigma2, scratch)?;
                Ok(match model.kind {
                    ChannelKind::Bijective(phi) => {
                        h + point.iter().map(|&a| phi.log_derivative(a)).sum::<f64>()
                    }
                    _ => h,
                })
            },
        )
        .collect()
}

/// Plug-in estimate of `H(Z)` in nats. For bijective channels this is
/// `Ĥ(A) + mean ln|det Jφ(A)|` by change of variables.
pub fn estimate_entropy(
    model: &ChannelModel,
    cov: &CovarianceMatrix,
    mc: &MCConfig,
) -> Result<MCEstimate> {
    let terms = entropy_terms(model, cov, mc)?;
    let (value, std_error) = mean_and_std_error(&terms);
    Ok(MCEstimate {
        value,
        std_error,
        config: *mc,
    })
}

/// `H(Z|X) = (N1/2) ln(2πeσ²)` for additive-noise channels.
pub fn noise_entropy(n1: usize, sigma2: f64) -> f64 {
    0.5 * n1 as f64 * (LN_2PI + 1.0 + sigma2.ln())
}

/// `E ln|det Jφ(A)|` over fresh draws of `(X, η)`, independent of those
/// used by the entropy estimate.
fn conditional_jacobian_terms(
    model: &ChannelModel,
    phi: BijectiveActivation,
    cov: &CovarianceMatrix,
    mc: &MCConfig,
) -> Result<Vec<f64>> {
    let l = lower_factor(cov)?;
    let n1 = model.output_dim();
    let sigma = model.sigma2.sqrt();
    Ok((0..mc.n_outer)
        .into_par_iter()
        .map(|j| {
            let x = draw_input(&l, mc.seed, Domain::JacobianInputs, j);
            let eta = draw_noise(n1, sigma, mc.seed, Domain::JacobianNoise, j);
            let a = model.centre(&x) + eta;
            a.iter().map(|&v| phi.log_derivative(v)).sum()
        })
        .collect())
}

/// `Î(X; Z) = Ĥ(Z) − H(Z|X)`.
pub fn estimate_mi(
    model: &ChannelModel,
    cov: &CovarianceMatrix,
    mc: &MCConfig,
) -> Result<MCEstimate> {
    let h = estimate_entropy(model, cov, mc)?;
    let noise = noise_entropy(model.output_dim(), model.sigma2);
    match model.kind {
        ChannelKind::Bijective(phi) => {
            // H(Z|X) = H(A|X) + E ln|det Jφ(A)|, the expectation estimated
            // on an independent sample.
            let jac = conditional_jacobian_terms(model, phi, cov, mc)?;
            let (jac_mean, jac_se) = mean_and_std_error(&jac);
            Ok(MCEstimate {
                value: h.value - noise - jac_mean,
                std_error: (h.std_error.powi(2) + jac_se.powi(2)).sqrt(),
                config: *mc,
            })
        }
        _ => Ok(MCEstimate {
            value: h.value - noise,
            ..h
        }),
    }
}

fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Union bound `Σ_i Φ(−b_i / √(WΣWᵀ)_ii)` on the probability that any
/// pre-activation is negative, clamped to `[0, 1]`. The relu and linear
/// channels have identical conditionals outside that event, so this bounds
/// the total variation between their marginals.
pub fn delta_bound(model: &ReluModel, cov: &CovarianceMatrix) -> Result<f64> {
    let w = model.weights.entries();
    if w.ncols() != cov.dim() {
        return Err(MmiError::DimensionMismatch(format!(
            "W has {} columns but the input has dimension {}",
            w.ncols(),
            cov.dim()
        )));
    }
    let pre_cov = w * cov.matrix() * w.transpose();
    let total: f64 = model
        .bias
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let var = pre_cov[(i, i)];
            if var <= 0.0 {
                // degenerate coordinate: constant pre-activation b
                if b < 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                standard_normal_cdf(-b / var.sqrt())
            }
        })
        .sum();
    Ok(total.clamp(0.0, 1.0))
}

/// `h₂(δ) = −δ ln δ − (1−δ) ln(1−δ)`
pub fn binary_entropy(delta: f64) -> f64 {
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.ln() };
    term(delta) + term(1.0 - delta)
}

/// Bound on `|I(X;Z) − I(X;Z_relu)|` for marginals at total variation `δ`:
/// `g(δ) = 4δ|ln 2δ| + 2δ|ln M| + 2h₂(δ)`, `M = max{1, (2πσ²)^{−N1/2}}`.
pub fn g_bound(delta: f64, sigma2: f64, n1: usize) -> Result<f64> {
    if !(0.0..std::f64::consts::E.recip()).contains(&delta) {
        return Err(MmiError::DeltaOutOfRange(delta));
    }
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(MmiError::InvalidParameter(format!(
            "noise variance must be positive, got {sigma2}"
        )));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    let ln_m = (-0.5 * n1 as f64 * (LN_2PI + sigma2.ln())).max(0.0);
    Ok(4.0 * delta * (2.0 * delta).ln().abs() + 2.0 * delta * ln_m + 2.0 * binary_entropy(delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluRow {
    pub scale: f64,
    pub delta_bound: f64,
    pub g_bound: Option<f64>,
    pub mi_estimate: f64,
    pub std_error: f64,
    pub closed_form: f64,
    pub gap: f64,
}

/// Serialized as `{"theorem": .., "rows": [..], "pass": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: String,
    pub rows: Vec<ReluRow>,
    pub pass: bool,
}

/// Large-bias relu construction: optimal linear weights with `b = c·1` for
/// each scale `c`, comparing the estimated relu MI against the closed form.
///
/// Passes when the gap is non-increasing in `c` up to three combined
/// standard errors and the last gap is within `g(δ) + 3·se` of zero.
pub fn verify_relu_theorem(
    f: f64,
    cov: &CovarianceMatrix,
    sigma2: f64,
    n1: usize,
    bias_scales: &[f64],
    mc: &MCConfig,
) -> Result<TheoremReport> {
    if bias_scales.is_empty()
        || bias_scales.iter().any(|c| !(c.is_finite() && *c > 0.0))
        || bias_scales.windows(2).any(|w| w[1] < w[0])
    {
        return Err(MmiError::InvalidParameter(
            "bias scales must be positive and ascending".into(),
        ));
    }
    let w = build_optimal_weights(f, cov.eigen(), sigma2, n1)?;
    let closed_form = mmi_fc(
        ChannelParams::new(sigma2, f)?,
        &cov.eigen().spectrum,
        cov.dim(),
        n1,
    )?
    .nats;

    let mut rows = Vec::with_capacity(bias_scales.len());
    for &scale in bias_scales {
        let model = ReluModel::new(w.clone(), DVector::from_element(n1, scale), sigma2)?;
        let delta = delta_bound(&model, cov)?;
        let g = g_bound(delta, sigma2, n1).ok();
        let est = estimate_mi(&model.relu_channel(), cov, mc)?;
        rows.push(ReluRow {
            scale,
            delta_bound: delta,
            g_bound: g,
            mi_estimate: est.value,
            std_error: est.std_error,
            closed_form,
            gap: closed_form - est.value,
        });
    }

    let monotone = rows.windows(2).all(|p| {
        let noise = (p[0].std_error.powi(2) + p[1].std_error.powi(2)).sqrt();
        p[1].gap <= p[0].gap + 3.0 * noise
    });
    let last = rows.last().expect("non-empty");
    let final_ok = match last.g_bound {
        Some(g) => last.gap.abs() <= g + 3.0 * last.std_error,
        None => false,
    };
    Ok(TheoremReport {
        theorem: "relu MMI equals linear MMI (large-bias construction)".into(),
        rows,
        pass: monotone && final_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub h_linear: MCEstimate,
    pub h_relu: MCEstimate,
    /// `Ĥ(Z_relu) − Ĥ(Z)`
    pub difference: f64,
    pub combined_std_error: f64,
    pub pass: bool,
}

/// Checks `Ĥ(Z_relu) ≤ Ĥ(Z) + 3·se` with both entropies computed from the
/// same input and noise draws.
pub fn verify_entropy_ordering(
    model: &ReluModel,
    cov: &CovarianceMatrix,
    mc: &MCConfig,
) -> Result<OrderingReport> {
    let h_linear = estimate_entropy(&model.linear_channel(), cov, mc)?;
    let h_relu = estimate_entropy(&model.relu_channel(), cov, mc)?;
    let difference = h_relu.value - h_linear.value;
    let combined_std_error = (h_linear.std_error.powi(2) + h_relu.std_error.powi(2)).sqrt();
    Ok(OrderingReport {
        h_linear,
        h_relu,
        difference,
        combined_std_error,
        pass: difference <= 3.0 * combined_std_error,
    })
}
