//! Closed-form maximum mutual information.
//!
//! For a Gaussian input with spectrum `λ_1 ≥ … ≥ λ_N0`, noise variance `σ²`
//! and budget `Tr(WᵀW) ≤ F`, the MMI with `a` active components is
//!
//! ```text
//! a/2 · ln((F + σ² Σ_{i≤a} 1/λ_i) / (σ² a)) + ½ Σ_{i≤a} ln λ_i
//! ```
//!
//! where `a = Ñ − K` and `K` is the water-filling regime for `F`. Every
//! architecture family reduces to this expression: convolutions multiply it by
//! the number of input blocks, multilayer stacks shrink `Ñ` to the narrowest
//! layer, and relu or bijective activations leave it unchanged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MmiError, Result};
use crate::spectrum::{
    eigvals_from_covariance, model_spectrum, BlockCovariance, Spectrum, SpectrumModel,
};
use crate::waterfill::{self, Breakpoints};

/// Default upper end of the bisection bracket used by [`invert_mmi`].
pub const DEFAULT_F_MAX: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    Bijective,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    FullyConnected {
        n0: usize,
        n1: usize,
    },
    /// Non-overlapping stride: the input splits into `n0 / n_b` blocks, each
    /// seen by the same `n_f x n_b` filter bank.
    Conv {
        n0: usize,
        n_b: usize,
        n_f: usize,
    },
    /// `widths` lists `N1..N_K`; noise enters after the last layer.
    MultiLayer {
        n0: usize,
        widths: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub activation: Activation,
}

impl ArchitectureSpec {
    pub fn new(family: Family, activation: Activation) -> Result<Self> {
        let spec = Self { family, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fully_connected(n0: usize, n1: usize) -> Result<Self> {
        Self::new(Family::FullyConnected { n0, n1 }, Activation::Linear)
    }

    pub fn conv(n0: usize, n_b: usize, n_f: usize) -> Result<Self> {
        Self::new(Family::Conv { n0, n_b, n_f }, Activation::Linear)
    }

    pub fn multilayer(n0: usize, widths: Vec<usize>) -> Result<Self> {
        Self::new(Family::MultiLayer { n0, widths }, Activation::Linear)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(MmiError::InvalidParameter(format!(
                    "{name} must be at least 1"
                )))
            } else {
                Ok(())
            }
        };
        match &self.family {
            Family::FullyConnected { n0, n1 } => {
                positive("N0", *n0)?;
                positive("N1", *n1)
            }
            Family::Conv { n0, n_b, n_f } => {
                positive("N0", *n0)?;
                positive("N_B", *n_b)?;
                positive("N_f", *n_f)?;
                if n0 % n_b != 0 {
                    return Err(MmiError::DimensionMismatch(format!(
                        "block size {n_b} does not divide N0 = {n0}"
                    )));
                }
                Ok(())
            }
            Family::MultiLayer { n0, widths } => {
                positive("N0", *n0)?;
                if widths.is_empty() {
                    return Err(MmiError::InvalidParameter(
                        "multilayer network needs at least one layer".into(),
                    ));
                }
                widths.iter().try_for_each(|&w| positive("layer width", w))
            }
        }
    }

    /// The MMI bottleneck `Ñ`.
    pub fn n_tilde(&self) -> usize {
        match &self.family {
            Family::FullyConnected { n0, n1 } => (*n0).min(*n1),
            Family::Conv { n_b, n_f, .. } => (*n_b).min(*n_f),
            Family::MultiLayer { n0, widths } => widths.iter().copied().fold(*n0, usize::min),
        }
    }

    /// Length of the spectrum this architecture is evaluated on: `N0`, or
    /// `N_B` (the block spectrum) for convolutions.
    pub fn spectrum_len(&self) -> usize {
        match &self.family {
            Family::FullyConnected { n0, .. } | Family::MultiLayer { n0, .. } => *n0,
            Family::Conv { n_b, .. } => *n_b,
        }
    }

    /// Number of identical channel copies: `N0 / N_B` for convolutions.
    pub fn repetitions(&self) -> usize {
        match &self.family {
            Family::Conv { n0, n_b, .. } => n0 / n_b,
            _ => 1,
        }
    }
}

/// Noise variance and Frobenius budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub sigma2: f64,
    pub budget: f64,
}

impl ChannelParams {
    pub fn new(sigma2: f64, budget: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(MmiError::InvalidParameter(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        if budget.is_nan() || budget < 0.0 {
            return Err(MmiError::NegativeBudget(budget));
        }
        if !budget.is_finite() {
            return Err(MmiError::InvalidParameter("budget must be finite".into()));
        }
        Ok(Self { sigma2, budget })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmiResult {
    pub nats: f64,
    pub regime_k: usize,
    pub active_components: usize,
    pub n_tilde: usize,
    pub breakpoints: Breakpoints,
    pub activation: Activation,
}

/// The closed form with exactly `active` components switched on, regardless
/// of whether `budget` lies in that regime.
pub fn regime_formula(spectrum: &Spectrum, sigma2: f64, budget: f64, active: usize) -> Result<f64> {
    if active == 0 || active > spectrum.len() {
        return Err(MmiError::IndexOutOfRange {
            index: active,
            max: spectrum.len(),
        });
    }
    let top = &spectrum.values()[..active];
    let inv_trace: f64 = top.iter().map(|l| 1.0 / l).sum();
    let log_det: f64 = top.iter().map(|l| l.ln()).sum();
    let a = active as f64;
    Ok(0.5 * a * ((budget + sigma2 * inv_trace) / (sigma2 * a)).ln() + 0.5 * log_det)
}

fn mmi_on_spectrum(
    params: ChannelParams,
    spectrum: &Spectrum,
    n_tilde: usize,
    activation: Activation,
) -> Result<MmiResult> {
    let breakpoints = waterfill::breakpoints(spectrum, params.sigma2, n_tilde)?;
    let regime_k = waterfill::regime(params.budget, &breakpoints)?;
    let active = n_tilde - regime_k;
    let nats = if params.budget == 0.0 {
        0.0
    } else {
        regime_formula(spectrum, params.sigma2, params.budget, active)?
    };
    Ok(MmiResult {
        nats,
        regime_k,
        active_components: active,
        n_tilde,
        breakpoints,
        activation,
    })
}

fn check_spectrum_len(spectrum: &Spectrum, expected: usize, what: &str) -> Result<()> {
    if spectrum.len() != expected {
        return Err(MmiError::DimensionMismatch(format!(
            "spectrum has {} eigenvalues but {what} = {expected}",
            spectrum.len()
        )));
    }
    Ok(())
}

/// Single fully connected layer `N0 → N1`.
pub fn mmi_fc(
    params: ChannelParams,
    spectrum: &Spectrum,
    n0: usize,
    n1: usize,
) -> Result<MmiResult> {
    let arch = ArchitectureSpec::fully_connected(n0, n1)?;
    check_spectrum_len(spectrum, n0, "N0")?;
    mmi_on_spectrum(params, spectrum, arch.n_tilde(), arch.activation)
}

/// Convolution with a shared `N_f x N_B` filter bank over block-diagonal
/// input statistics. The budget applies to the shared filter and is not
/// split across blocks.
pub fn mmi_conv(params: ChannelParams, block: &BlockCovariance, n_f: usize) -> Result<MmiResult> {
    let spectrum = eigvals_from_covariance(block.block());
    mmi_conv_spectrum(params, &spectrum, block.repetitions(), n_f)
}

/// [`mmi_conv`] from the block spectrum directly.
pub fn mmi_conv_spectrum(
    params: ChannelParams,
    block_spectrum: &Spectrum,
    repetitions: usize,
    n_f: usize,
) -> Result<MmiResult> {
    if repetitions == 0 {
        return Err(MmiError::InvalidParameter(
            "repetitions must be positive".into(),
        ));
    }
    let n_b = block_spectrum.len();
    let mut result = mmi_fc(params, block_spectrum, n_b, n_f)?;
    result.nats *= repetitions as f64;
    Ok(result)
}

/// Stack of fully connected layers with widths `N1..N_K` and the budget on
/// the end-to-end product `W_K⋯W_1`.
pub fn mmi_multilayer(
    params: ChannelParams,
    spectrum: &Spectrum,
    widths: &[usize],
) -> Result<MmiResult> {
    let arch = ArchitectureSpec::multilayer(spectrum.len(), widths.to_vec())?;
    mmi_on_spectrum(params, spectrum, arch.n_tilde(), arch.activation)
}

/// Dispatches on the architecture family. For convolutions `spectrum` is the
/// block spectrum.
pub fn evaluate(
    arch: &ArchitectureSpec,
    spectrum: &Spectrum,
    params: ChannelParams,
) -> Result<MmiResult> {
    arch.validate()?;
    check_spectrum_len(
        spectrum,
        arch.spectrum_len(),
        "the architecture's input size",
    )?;
    let mut result = match &arch.family {
        Family::FullyConnected { n0, n1 } => mmi_fc(params, spectrum, *n0, *n1)?,
        Family::Conv { n_f, .. } => mmi_conv_spectrum(params, spectrum, arch.repetitions(), *n_f)?,
        Family::MultiLayer { widths, .. } => mmi_multilayer(params, spectrum, widths)?,
    };
    result.activation = arch.activation;
    Ok(result)
}

/// `½ Σ_{i≤Ñ} ln(λ_i · mean_j(1/λ_j))`: the all-active closed form with the
/// `F / (σ² Ñ)` term dropped.
pub fn mmi_approx_large_n(spectrum: &Spectrum, n_tilde: usize) -> Result<f64> {
    if n_tilde == 0 || n_tilde > spectrum.len() {
        return Err(MmiError::IndexOutOfRange {
            index: n_tilde,
            max: spectrum.len(),
        });
    }
    let top = &spectrum.values()[..n_tilde];
    let mean_inv = top.iter().map(|l| 1.0 / l).sum::<f64>() / n_tilde as f64;
    Ok(0.5 * top.iter().map(|l| (l * mean_inv).ln()).sum::<f64>())
}

/// Evaluates the MMI at every budget in `grid` (non-negative, ascending).
pub fn mmi_curve(
    arch: &ArchitectureSpec,
    spectrum: &Spectrum,
    sigma2: f64,
    grid: &[f64],
) -> Result<Vec<(f64, MmiResult)>> {
    if let Some(&f) = grid.iter().find(|f| f.is_nan() || **f < 0.0) {
        return Err(MmiError::NegativeBudget(f));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(MmiError::InvalidParameter(
            "budget grid must be ascending".into(),
        ));
    }
    grid.par_iter()
        .map(|&f| Ok((f, evaluate(arch, spectrum, ChannelParams::new(sigma2, f)?)?)))
        .collect()
}

/// `lo:hi:n` inclusive linear grid.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(lo.is_finite() && hi.is_finite()) || hi < lo || (n == 1 && hi != lo) {
        return Err(MmiError::InvalidParameter(format!(
            "invalid grid {lo}:{hi}:{n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    grid[n - 1] = hi;
    Ok(grid)
}

/// Reference curve setups: `N0 = 100`, `N1 = 50`, `σ² = 1`, 400 budgets
/// from 0 to 1.25 × the last breakpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurvePreset {
    /// `λ_i = e^{−0.1(i−1)}`
    Left,
    /// `λ_i = 1/i`
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetSetup {
    pub arch: ArchitectureSpec,
    pub spectrum: Spectrum,
    pub sigma2: f64,
    pub grid: Vec<f64>,
}

pub fn curve_preset(preset: CurvePreset) -> Result<PresetSetup> {
    let model = match preset {
        CurvePreset::Left => SpectrumModel::ExpDecay { rate: 0.1 },
        CurvePreset::Right => SpectrumModel::Harmonic,
    };
    let spectrum = model_spectrum(&model, 100)?;
    let arch = ArchitectureSpec::fully_connected(100, 50)?;
    let bp = waterfill::breakpoints(&spectrum, 1.0, arch.n_tilde())?;
    let top = bp.rho()[bp.n_tilde() - 1];
    Ok(PresetSetup {
        arch,
        spectrum,
        sigma2: 1.0,
        grid: linear_grid(0.0, 1.25 * top, 400)?,
    })
}

/// Smallest budget whose MMI reaches `target_nats`, by bisection on
/// `[0, f_max]`.
pub fn invert_mmi(
    arch: &ArchitectureSpec,
    spectrum: &Spectrum,
    sigma2: f64,
    target_nats: f64,
    f_max: f64,
) -> Result<f64> {
    if !(target_nats.is_finite() && target_nats > 0.0) {
        return Err(MmiError::InvalidParameter(format!(
            "target must be positive, got {target_nats}"
        )));
    }
    let at = |f: f64| -> Result<f64> {
        Ok(evaluate(arch, spectrum, ChannelParams::new(sigma2, f)?)?.nats)
    };
    let reachable = at(f_max)?;
    if target_nats > reachable {
        return Err(MmiError::TargetUnreachable {
            target: target_nats,
            reachable,
        });
    }
    let (mut lo, mut hi) = (0.0_f64, f_max);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let value = at(mid)?;
        if value == target_nats {
            return Ok(mid);
        }
        if value < target_nats {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Both ends bracket the target; return whichever is closer.
    let (v_lo, v_hi) = (at(lo)?, at(hi)?);
    Ok(
        if (v_lo - target_nats).abs() <= (v_hi - target_nats).abs() {
            lo
        } else {
            hi
        },
    )
}

/// Nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
