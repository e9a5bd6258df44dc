//! The end-to-end verification suite behind `mmi verify`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MmiError, Result};
use crate::instances::{log_uniform_spectrum, random_covariance, random_weights};
use crate::mc::{
    estimate_mi, verify_entropy_ordering, verify_relu_theorem, BijectiveActivation, ChannelKind,
    ChannelModel, MCConfig, ReluModel, TheoremReport,
};
use crate::mmi::{mmi_fc, regime_formula, ChannelParams};
use crate::oracle::{
    build_optimal_weights, exact_linear_mi, maximize_mi, OptimizerConfig, WeightMatrix,
};
use crate::rng::{child_seed, substream, Domain};
use crate::spectrum::{CovarianceMatrix, Spectrum};
use crate::waterfill::breakpoints;

pub const ACHIEVABILITY_TOL: f64 = 1e-9;
pub const OPTIMALITY_TOL: f64 = 1e-4;
pub const SOUNDNESS_TOL: f64 = 1e-9;
pub const AGREEMENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub n1: usize,
    pub sigma2: f64,
    pub budget: f64,
    pub bias_scales: Vec<f64>,
    /// `n_outer = n_inner` for every Monte-Carlo estimate.
    pub mc_samples: usize,
    /// Extra random instances for the deterministic checks.
    pub random_instances: usize,
    /// Random `(W, b)` pairs for the entropy-ordering check.
    pub ordering_instances: usize,
    pub optimizer: OptimizerConfig,
    /// Added to every closed-form value; non-zero only for fault injection.
    pub closed_form_offset: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n1: 3,
            sigma2: 1.0,
            budget: 3.0,
            bias_scales: vec![2.0, 4.0, 8.0],
            mc_samples: 5000,
            random_instances: 8,
            ordering_instances: 4,
            optimizer: OptimizerConfig::default(),
            closed_form_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Worst observed deviation.
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
    pub relu: TheoremReport,
    pub pass: bool,
}

struct Instance {
    cov: CovarianceMatrix,
    n1: usize,
    sigma2: f64,
    budget: f64,
}

fn random_instances(cfg: &VerifyConfig) -> Result<Vec<Instance>> {
    (0..cfg.random_instances)
        .map(|i| {
            let mut rng = substream(cfg.seed, Domain::Instances, i as u64);
            let n0 = rng.random_range(1..=4);
            let n1 = rng.random_range(1..=4);
            let sigma2 = [0.1, 1.0, 10.0][rng.random_range(0..3)];
            let spectrum = log_uniform_spectrum(&mut rng, n0, 1e-2, 1e2)?;
            let cov = random_covariance(&mut rng, &spectrum)?;
            // budgets between and beyond the breakpoints
            let bp = breakpoints(&spectrum, sigma2, n0.min(n1))?;
            let top = bp.rho()[bp.n_tilde() - 1];
            let budget = rng.random_range(0.0..=2.0 * top + sigma2);
            Ok(Instance {
                cov,
                n1,
                sigma2,
                budget,
            })
        })
        .collect()
}

fn closed_form(inst: &Instance, offset: f64) -> Result<f64> {
    let params = ChannelParams::new(inst.sigma2, inst.budget)?;
    Ok(mmi_fc(params, &inst.cov.eigen().spectrum, inst.cov.dim(), inst.n1)?.nats + offset)
}

fn check(name: &str, metric: f64, threshold: f64, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        pass,
        metric,
        threshold,
        detail,
    }
}

/// Runs every check on the primary instance (`spectrum` under a random
/// rotation) plus `random_instances` small random ones.
pub fn run_verification(spectrum: &Spectrum, cfg: &VerifyConfig) -> Result<VerificationReport> {
    if cfg.n1 == 0 {
        return Err(MmiError::InvalidParameter("n1 must be at least 1".into()));
    }
    let mc = MCConfig::new(cfg.mc_samples, cfg.mc_samples, cfg.seed)?;
    let mut rng = substream(cfg.seed, Domain::Instances, u64::MAX);
    let primary = Instance {
        cov: random_covariance(&mut rng, spectrum)?,
        n1: cfg.n1,
        sigma2: cfg.sigma2,
        budget: cfg.budget,
    };
    let mut instances = vec![primary];
    instances.extend(random_instances(cfg)?);
    let primary = &instances[0];
    let mut checks = Vec::new();

    // (a) achievability
    let mut worst = 0.0_f64;
    for inst in &instances {
        let w = build_optimal_weights(inst.budget, inst.cov.eigen(), inst.sigma2, inst.n1)?;
        let exact = exact_linear_mi(&w, &inst.cov, inst.sigma2)?;
        worst = worst.max((exact - closed_form(inst, cfg.closed_form_offset)?).abs());
    }
    checks.push(check(
        "achievability",
        worst,
        ACHIEVABILITY_TOL,
        worst <= ACHIEVABILITY_TOL,
        format!(
            "{} instances, exact MI of the constructed weights vs closed form",
            instances.len()
        ),
    ));

    // (b) optimizer gap
    let mut worst_gap = 0.0_f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for (i, inst) in instances.iter().enumerate() {
        let opt_cfg = OptimizerConfig {
            seed: child_seed(cfg.seed, i as u64),
            ..cfg.optimizer
        };
        let out = maximize_mi(inst.budget, &inst.cov, inst.sigma2, inst.n1, &opt_cfg)?;
        let closed = closed_form(inst, cfg.closed_form_offset)?;
        worst_gap = worst_gap.max(closed - out.achieved_nats);
        worst_excess = worst_excess.max(out.achieved_nats - closed);
    }
    checks.push(check(
        "optimizer_gap",
        worst_gap,
        OPTIMALITY_TOL,
        worst_gap <= OPTIMALITY_TOL && worst_excess <= SOUNDNESS_TOL,
        format!("max excess over closed form {worst_excess:e}"),
    ));

    // (c) adjacent regime formulas agree at each breakpoint
    let mut worst = 0.0_f64;
    for inst in &instances {
        let spectrum = &inst.cov.eigen().spectrum;
        let n_tilde = inst.cov.dim().min(inst.n1);
        let bp = breakpoints(spectrum, inst.sigma2, n_tilde)?;
        for k in 2..=n_tilde {
            let rho = bp.get(k)?;
            let with_k = regime_formula(spectrum, inst.sigma2, rho, k)?;
            let without = regime_formula(spectrum, inst.sigma2, rho, k - 1)?;
            worst = worst.max((with_k - without).abs());
        }
    }
    checks.push(check(
        "breakpoint_agreement",
        worst,
        AGREEMENT_TOL,
        worst <= AGREEMENT_TOL,
        "regime formulas on either side of every breakpoint".into(),
    ));

    // (d) relu large-bias construction
    let mut relu = verify_relu_theorem(
        primary.budget,
        &primary.cov,
        primary.sigma2,
        primary.n1,
        &cfg.bias_scales,
        &mc,
    )?;
    if cfg.closed_form_offset != 0.0 {
        for row in &mut relu.rows {
            row.closed_form += cfg.closed_form_offset;
            row.gap += cfg.closed_form_offset;
        }
        let last = relu.rows.last().expect("non-empty");
        relu.pass &=
            last.gap.abs() <= last.g_bound.unwrap_or(f64::NEG_INFINITY) + 3.0 * last.std_error;
    }
    let last = relu.rows.last().expect("non-empty");
    checks.push(check(
        "relu_large_bias",
        last.gap.abs(),
        last.g_bound.unwrap_or(f64::NAN) + 3.0 * last.std_error,
        relu.pass,
        format!("bias scales {:?}", cfg.bias_scales),
    ));

    // (e) H(Z_relu) ≤ H(Z)
    let w_opt = build_optimal_weights(
        primary.budget,
        primary.cov.eigen(),
        primary.sigma2,
        primary.n1,
    )?;
    let n0 = primary.cov.dim();
    let mut ordering_models = vec![ReluModel::new(
        w_opt.clone(),
        DVector::zeros(primary.n1),
        primary.sigma2,
    )?];
    for i in 0..cfg.ordering_instances {
        let mut rng = substream(child_seed(cfg.seed, 1 << 32), Domain::Instances, i as u64);
        let w = random_weights(&mut rng, primary.n1, n0, primary.budget.max(1.0));
        let b = DVector::from_fn(primary.n1, |_, _| rng.random_range(-2.0..2.0));
        ordering_models.push(ReluModel::new(WeightMatrix::new(w), b, primary.sigma2)?);
    }
    let mut worst_margin = f64::NEG_INFINITY;
    let mut all = true;
    for model in &ordering_models {
        let r = verify_entropy_ordering(model, &primary.cov, &mc)?;
        all &= r.pass;
        worst_margin = worst_margin.max(r.difference - 3.0 * r.combined_std_error);
    }
    checks.push(check(
        "entropy_ordering",
        worst_margin,
        0.0,
        all,
        format!(
            "{} (W, b) pairs, H(Z_relu) - H(Z) - 3 se",
            ordering_models.len()
        ),
    ));

    // (f) bijective invariance
    let linear = ChannelModel::linear(w_opt.clone(), primary.sigma2)?;
    let tanh = ChannelModel {
        kind: ChannelKind::Bijective(BijectiveActivation::Tanh),
        ..linear.clone()
    };
    let mi_lin = estimate_mi(&linear, &primary.cov, &mc)?;
    let mi_tanh = estimate_mi(&tanh, &primary.cov, &mc)?;
    let diff = (mi_tanh.value - mi_lin.value).abs();
    let tol = 3.0 * (mi_lin.std_error.powi(2) + mi_tanh.std_error.powi(2)).sqrt();
    checks.push(check(
        "bijective_invariance",
        diff,
        tol,
        diff <= tol,
        format!(
            "linear {:.6} vs tanh {:.6} nats",
            mi_lin.value, mi_tanh.value
        ),
    ));

    let pass = checks.iter().all(|c| c.pass);
    Ok(VerificationReport {
        seed: cfg.seed,
        checks,
        relu,
        pass,
    })
}
