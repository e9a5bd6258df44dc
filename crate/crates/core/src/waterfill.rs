//! Water-filling over the principal components of the input.
//!
//! Maximizes `Σ_{i≤Ñ} ln(λ̃_i + σ²/λ_i)` subject to `Σ λ̃_i = F`, `λ̃_i ≥ 0`.
//! The solution is `λ̃_i = max(0, μ* − σ²/λ_i)`; which components are active
//! is decided by comparing `F` against the breakpoints
//!
//! ```text
//! ρ_k = σ² (k / λ_k − Σ_{i≤k} 1/λ_i),   k = 1..Ñ
//! ```
//!
//! With `a = Ñ − K` active components, `μ* = (F + σ² Σ_{i≤a} 1/λ_i) / a`.

use serde::Serialize;

use crate::error::{MmiError, Result};
use crate::spectrum::Spectrum;

/// `ρ_1..ρ_Ñ`, stored 0-based (`rho()[k - 1]` is `ρ_k`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoints {
    rho: Vec<f64>,
}

impl Breakpoints {
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// `ρ_k` for `k` in `1..=Ñ`.
    pub fn get(&self, k: usize) -> Result<f64> {
        if k == 0 || k > self.rho.len() {
            return Err(MmiError::IndexOutOfRange {
                index: k,
                max: self.rho.len(),
            });
        }
        Ok(self.rho[k - 1])
    }

    /// `Ñ`
    pub fn n_tilde(&self) -> usize {
        self.rho.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfillSolution {
    pub mu_star: f64,
    /// `λ̃_1..λ̃_Ñ`, non-increasing.
    pub allocations: Vec<f64>,
    /// `Ñ − K`. At a breakpoint the last active allocation is exactly zero.
    pub active_count: usize,
    pub budget_used: f64,
    pub regime_k: usize,
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
    if f.is_infinite() {
        return Err(MmiError::InvalidParameter("budget must be finite".into()));
    }
    Ok(())
}

fn check_n_tilde(spectrum: &Spectrum, n_tilde: usize) -> Result<()> {
    if n_tilde == 0 || n_tilde > spectrum.len() {
        return Err(MmiError::IndexOutOfRange {
            index: n_tilde,
            max: spectrum.len(),
        });
    }
    Ok(())
}

/// `Σ_{i≤k} 1/λ_i`
pub(crate) fn inverse_trace(spectrum: &Spectrum, k: usize) -> f64 {
    spectrum.values()[..k].iter().map(|l| 1.0 / l).sum()
}

/// A single breakpoint `ρ_k`.
pub fn rho_k(spectrum: &Spectrum, sigma2: f64, k: usize) -> Result<f64> {
    check_sigma2(sigma2)?;
    spectrum.lambda(k)?;
    Ok(rho_unchecked(spectrum.values(), sigma2, k))
}

// Evaluated as σ² Σ_{i<k} (1/λ_k − 1/λ_i): every term is non-negative and
// termwise no larger than the matching term of ρ_{k+1}, so the computed
// sequence is non-decreasing in floating point, not just in exact arithmetic.
fn rho_unchecked(values: &[f64], sigma2: f64, k: usize) -> f64 {
    let inv_k = 1.0 / values[k - 1];
    let gap = values[..k - 1]
        .iter()
        .fold(0.0, |acc, l| acc + (inv_k - 1.0 / l));
    sigma2 * gap
}

/// `ρ_1..ρ_Ñ`.
pub fn breakpoints(spectrum: &Spectrum, sigma2: f64, n_tilde: usize) -> Result<Breakpoints> {
    check_sigma2(sigma2)?;
    check_n_tilde(spectrum, n_tilde)?;
    let rho = (1..=n_tilde)
        .map(|k| rho_unchecked(spectrum.values(), sigma2, k))
        .collect();
    Ok(Breakpoints { rho })
}

/// Smallest `K` with `F ≥ ρ_{Ñ−K}`; ties go to the regime with more active
/// components.
pub fn regime(f: f64, bp: &Breakpoints) -> Result<usize> {
    check_budget(f)?;
    let n_tilde = bp.n_tilde();
    let k = (0..n_tilde)
        .find(|&k| f >= bp.rho[n_tilde - k - 1])
        .expect("ρ_1 = 0 admits every non-negative budget");
    Ok(k)
}

/// Water level and allocations for budget `f` over the top `n_tilde`
/// components.
pub fn solve_waterfill(
    f: f64,
    spectrum: &Spectrum,
    sigma2: f64,
    n_tilde: usize,
) -> Result<WaterfillSolution> {
    check_budget(f)?;
    let bp = breakpoints(spectrum, sigma2, n_tilde)?;
    solve_with_breakpoints(f, spectrum, sigma2, &bp)
}

pub(crate) fn solve_with_breakpoints(
    f: f64,
    spectrum: &Spectrum,
    sigma2: f64,
    bp: &Breakpoints,
) -> Result<WaterfillSolution> {
    let n_tilde = bp.n_tilde();
    let regime_k = regime(f, bp)?;
    let active = n_tilde - regime_k;
    let mu_star = (f + sigma2 * inverse_trace(spectrum, active)) / active as f64;
    let allocations: Vec<f64> = spectrum.values()[..n_tilde]
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            if i < active {
                (mu_star - sigma2 / l).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let budget_used = allocations.iter().sum();
    Ok(WaterfillSolution {
        mu_star,
        allocations,
        active_count: active,
        budget_used,
        regime_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rho_examples() {
        assert_eq!(rho_k(&spec(&[1.0]), 1.0, 1).unwrap(), 0.0);
        assert_relative_eq!(rho_k(&spec(&[2.0, 1.0]), 1.0, 2).unwrap(), 0.5);
        let iso = spec(&[3.0; 5]);
        for k in 1..=5 {
            assert_eq!(rho_k(&iso, 1.0, k).unwrap(), 0.0);
        }
        assert!(matches!(
            rho_k(&spec(&[2.0, 1.0]), 1.0, 3),
            Err(MmiError::IndexOutOfRange { index: 3, max: 2 })
        ));
        assert!(rho_k(&spec(&[2.0, 1.0]), 1.0, 0).is_err());
    }

    #[test]
    fn breakpoint_examples() {
        assert_eq!(
            breakpoints(&spec(&[2.0, 1.0]), 1.0, 2).unwrap().rho(),
            &[0.0, 0.5]
        );
        assert_eq!(
            breakpoints(&spec(&[1.0; 3]), 1.0, 3).unwrap().rho(),
            &[0.0; 3]
        );
        let bp = breakpoints(&spec(&[4.0, 2.0, 1.0]), 1.0, 3).unwrap();
        assert_eq!(bp.rho(), &[0.0, 0.25, 1.25]);
        assert!(breakpoints(&spec(&[4.0, 2.0, 1.0]), 1.0, 4).is_err());
        assert!(breakpoints(&spec(&[4.0]), 0.0, 1).is_err());
    }

    #[test]
    fn regime_examples() {
        let bp = breakpoints(&spec(&[2.0, 1.0]), 1.0, 2).unwrap();
        assert_eq!(regime(10.0, &bp).unwrap(), 0);
        assert_eq!(regime(0.25, &bp).unwrap(), 1);
        assert_eq!(regime(0.5, &bp).unwrap(), 0);
        assert_eq!(regime(0.0, &bp).unwrap(), 1);
        assert!(matches!(
            regime(-1.0, &bp),
            Err(MmiError::NegativeBudget(_))
        ));
    }

    #[test]
    fn isotropic_zero_width_regimes_are_skipped() {
        let bp = breakpoints(&spec(&[1.0; 4]), 1.0, 4).unwrap();
        assert_eq!(regime(0.0, &bp).unwrap(), 0);
        let sol = solve_waterfill(0.0, &spec(&[1.0; 4]), 1.0, 4).unwrap();
        assert_eq!(sol.active_count, 4);
        assert!(sol.allocations.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn waterfill_examples() {
        let s = spec(&[2.0, 1.0]);
        let sol = solve_waterfill(2.5, &s, 1.0, 2).unwrap();
        assert_relative_eq!(sol.mu_star, 2.0);
        assert_relative_eq!(sol.allocations[0], 1.5);
        assert_relative_eq!(sol.allocations[1], 1.0);
        assert_relative_eq!(sol.budget_used, 2.5);

        let sol = solve_waterfill(0.0, &s, 1.0, 2).unwrap();
        assert_relative_eq!(sol.mu_star, 0.5);
        assert_eq!(sol.allocations, vec![0.0, 0.0]);

        let sol = solve_waterfill(0.25, &s, 1.0, 2).unwrap();
        assert_eq!(sol.regime_k, 1);
        assert_relative_eq!(sol.mu_star, 0.75);
        assert_relative_eq!(sol.allocations[0], 0.25);
        assert_eq!(sol.allocations[1], 0.0);

        assert!(matches!(
            solve_waterfill(-0.1, &s, 1.0, 2),
            Err(MmiError::NegativeBudget(_))
        ));
    }
}
