//! Closed-form maximum mutual information for Gaussian-input layers under a
//! Frobenius weight budget, with independent numerical oracles.
//!
//! The closed form lives in [`waterfill`] and [`mmi`]. [`oracle`] computes exact
//! Gaussian mutual information and runs projected gradient ascent, and [`mc`]
//! estimates entropies of non-linear channels by Monte Carlo.

pub mod error;
pub mod instances;
pub mod mc;
pub mod mmi;
pub mod oracle;
pub mod rng;
pub mod spectrum;
pub mod suite;
pub mod waterfill;

pub use error::{MmiError, Result};
pub use mc::{
    delta_bound, estimate_entropy, estimate_mi, g_bound, verify_entropy_ordering,
    verify_relu_theorem, BijectiveActivation, ChannelKind, ChannelModel, MCConfig, MCEstimate,
    OrderingReport, ReluModel, TheoremReport,
};
pub use mmi::{
    curve_preset, evaluate, invert_mmi, linear_grid, mmi_approx_large_n, mmi_conv,
    mmi_conv_spectrum, mmi_curve, mmi_fc, mmi_multilayer, nats_to_bits, Activation,
    ArchitectureSpec, ChannelParams, CurvePreset, Family, MmiResult, PresetSetup,
};
pub use oracle::{
    build_optimal_weights, exact_linear_mi, factor_check_multilayer, linear_mi_gradient,
    maximize_mi, maximize_mi_conv, OptimizerConfig, OptimizerOutcome, WeightMatrix,
};
pub use spectrum::{
    eigvals_from_covariance, model_spectrum, BlockCovariance, CovarianceMatrix, Eigendecomposition,
    Spectrum, SpectrumDoc, SpectrumModel,
};
pub use suite::{run_verification, VerificationReport, VerifyConfig};
pub use waterfill::{breakpoints, regime, rho_k, solve_waterfill, Breakpoints, WaterfillSolution};
