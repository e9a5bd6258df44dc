//! Acceptance suite: one line per criterion, non-zero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mmi_core::instances::{log_uniform_spectrum, random_weights};
use mmi_core::mmi::regime_formula;
use mmi_core::{
    breakpoints, build_optimal_weights, curve_preset, estimate_mi, exact_linear_mi,
    factor_check_multilayer, g_bound, maximize_mi, maximize_mi_conv, mmi_conv, mmi_curve, mmi_fc,
    mmi_multilayer, model_spectrum, run_verification, verify_entropy_ordering, verify_relu_theorem,
    BijectiveActivation, BlockCovariance, ChannelKind, ChannelModel, ChannelParams, CurvePreset,
    MCConfig, MmiError, OptimizerConfig, ReluModel, SpectrumModel, VerifyConfig, WeightMatrix,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: MmiError) -> String {
    e.to_string()
}

fn closed(sigma2: f64, f: f64, s: &mmi_core::Spectrum, n1: usize) -> Result<f64, String> {
    Ok(
        mmi_fc(ChannelParams::new(sigma2, f).map_err(err)?, s, s.len(), n1)
            .map_err(err)?
            .nats,
    )
}

fn achievability() -> Outcome {
    let mut worst = 0.0_f64;
    let mut evaluated = 0;
    for i in 0..200 {
        let mut rng = common::rng(10_000 + i);
        let n0 = rng.random_range(1..=16);
        let n1 = rng.random_range(1..=16);
        let s = common::spectrum(&mut rng, n0);
        let cov = mmi_core::instances::random_covariance(&mut rng, &s).map_err(err)?;
        let sigma2 = common::sigma2(&mut rng);
        let bp = breakpoints(&cov.eigen().spectrum, sigma2, n0.min(n1)).map_err(err)?;
        for f in common::budgets_spanning(bp.rho(), sigma2) {
            let w = build_optimal_weights(f, cov.eigen(), sigma2, n1).map_err(err)?;
            let exact = exact_linear_mi(&w, &cov, sigma2).map_err(err)?;
            let gap = (exact - closed(sigma2, f, &cov.eigen().spectrum, n1)?).abs();
            ensure(gap <= 1e-9, || format!("instance {i}, F={f}: gap {gap:e}"))?;
            worst = worst.max(gap);
            evaluated += 1;
        }
    }
    Ok(format!(
        "200 instances, {evaluated} budgets, worst gap {worst:.2e}"
    ))
}

fn optimality() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let mut rng = common::rng(20_000 + i);
        let n0 = rng.random_range(1..=8);
        let n1 = rng.random_range(1..=8);
        let cov = common::covariance(&mut rng, n0);
        let sigma2 = common::sigma2(&mut rng);
        let bp = breakpoints(&cov.eigen().spectrum, sigma2, n0.min(n1)).map_err(err)?;
        let f = rng.random_range(0.0..1.5 * bp.rho().last().unwrap() + sigma2);
        let config = OptimizerConfig {
            seed: i,
            ..OptimizerConfig::default()
        };
        let out = maximize_mi(f, &cov, sigma2, n1, &config).map_err(err)?;
        let c = closed(sigma2, f, &cov.eigen().spectrum, n1)?;
        ensure(out.achieved_nats <= c + 1e-9, || {
            format!("instance {i}: optimizer exceeds closed form")
        })?;
        ensure(c - out.achieved_nats <= 1e-4, || {
            format!("instance {i}: gap {:e}", c - out.achieved_nats)
        })?;
        worst = worst.max(c - out.achieved_nats);
    }
    let mut max_excess = f64::NEG_INFINITY;
    for i in 0..500 {
        let mut rng = common::rng(21_000 + i);
        let n0 = rng.random_range(1..=12);
        let n1 = rng.random_range(1..=12);
        let cov = common::covariance(&mut rng, n0);
        let sigma2 = common::sigma2(&mut rng);
        let f = rng.random_range(0.01..50.0);
        let w = WeightMatrix::new(random_weights(&mut rng, n1, n0, f));
        let excess = exact_linear_mi(&w, &cov, sigma2).map_err(err)?
            - closed(sigma2, f, &cov.eigen().spectrum, n1)?;
        ensure(excess <= 1e-9, || {
            format!("random W {i} exceeds closed form by {excess:e}")
        })?;
        max_excess = max_excess.max(excess);
    }
    Ok(format!(
        "20 optimizer runs, worst gap {worst:.2e}; 500 random W, max excess {max_excess:.2e}"
    ))
}

fn breakpoint_monotonicity() -> Outcome {
    for i in 0..1000 {
        let mut rng = common::rng(30_000 + i);
        let n = rng.random_range(1..=64);
        let s = log_uniform_spectrum(&mut rng, n, 1e-3, 1e3).map_err(err)?;
        let bp = breakpoints(&s, common::sigma2(&mut rng), n).map_err(err)?;
        ensure(bp.rho()[0] == 0.0, || {
            format!("spectrum {i}: rho_1 = {}", bp.rho()[0])
        })?;
        ensure(bp.rho().windows(2).all(|w| w[0] <= w[1]), || {
            format!("spectrum {i}: decreasing")
        })?;
    }
    Ok("1000 spectra".into())
}

fn piecewise_consistency() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..100 {
        let mut rng = common::rng(40_000 + i);
        let n = rng.random_range(1..=32);
        let s = common::spectrum(&mut rng, n);
        let sigma2 = common::sigma2(&mut rng);
        let bp = breakpoints(&s, sigma2, n).map_err(err)?;
        for k in 2..=n {
            let rho = bp.get(k).map_err(err)?;
            let d = (regime_formula(&s, sigma2, rho, k).map_err(err)?
                - regime_formula(&s, sigma2, rho, k - 1).map_err(err)?)
            .abs();
            ensure(d <= 1e-10, || format!("spectrum {i}, k={k}: {d:e}"))?;
            worst = worst.max(d);
        }
    }
    for preset in [CurvePreset::Left, CurvePreset::Right] {
        let setup = curve_preset(preset).map_err(err)?;
        let curve =
            mmi_curve(&setup.arch, &setup.spectrum, setup.sigma2, &setup.grid).map_err(err)?;
        ensure(curve[0].1.nats == 0.0, || {
            format!("{preset:?}: MMI(0) = {}", curve[0].1.nats)
        })?;
        ensure(curve.windows(2).all(|w| w[1].1.nats >= w[0].1.nats), || {
            format!("{preset:?} not monotone")
        })?;
        ensure(
            curve.windows(2).all(|w| w[1].1.regime_k <= w[0].1.regime_k),
            || format!("{preset:?} regime not stepping down"),
        )?;
    }
    Ok(format!(
        "100 spectra, worst disagreement {worst:.2e}; both presets monotone from 0"
    ))
}

fn convolution() -> Outcome {
    let mut worst = 0.0_f64;
    for (i, (n0, nb, nf)) in [(4usize, 2usize, 2usize), (6, 3, 2)]
        .into_iter()
        .enumerate()
    {
        let mut rng = common::rng(50_000 + i as u64);
        let block = common::covariance(&mut rng, nb);
        let sigma2 = 1.0;
        let f = 2.0;
        let bc = BlockCovariance::for_input(block.clone(), n0).map_err(err)?;
        let params = ChannelParams::new(sigma2, f).map_err(err)?;
        let conv = mmi_conv(params, &bc, nf).map_err(err)?.nats;
        let single = mmi_fc(params, &block.eigen().spectrum, nb, nf)
            .map_err(err)?
            .nats;
        let reps = (n0 / nb) as f64;
        ensure(conv == reps * single, || {
            format!("({n0},{nb},{nf}): {conv} != {reps} x {single}")
        })?;
        let config = OptimizerConfig {
            seed: i as u64,
            ..OptimizerConfig::default()
        };
        let out = maximize_mi_conv(f, &bc, nf, sigma2, &config).map_err(err)?;
        let gap = (conv - out.achieved_nats).abs();
        ensure(gap <= 1e-4, || {
            format!("({n0},{nb},{nf}): optimizer gap {gap:e}")
        })?;
        worst = worst.max(gap);
    }
    Ok(format!("worst optimizer gap {worst:.2e}; additivity exact"))
}

fn multilayer() -> Outcome {
    let mut worst = 0.0_f64;
    for i in 0..20 {
        let mut rng = common::rng(60_000 + i);
        let n0 = rng.random_range(1..=6);
        let depth = rng.random_range(1..=4);
        let widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=6)).collect();
        let cov = common::covariance(&mut rng, n0);
        let sigma2 = common::sigma2(&mut rng);
        let f = rng.random_range(0.1..10.0);
        let params = ChannelParams::new(sigma2, f).map_err(err)?;
        let narrow = *widths.iter().min().unwrap();
        let deep = mmi_multilayer(params, &cov.eigen().spectrum, &widths)
            .map_err(err)?
            .nats;
        let flat = closed(sigma2, f, &cov.eigen().spectrum, narrow)?;
        ensure(deep == flat, || format!("instance {i}: {deep} != {flat}"))?;

        let last = *widths.last().unwrap();
        let w = build_optimal_weights(f, cov.eigen(), sigma2, narrow).map_err(err)?;
        let rows = narrow.min(last);
        let mut padded = DMatrix::zeros(last, n0);
        padded
            .view_mut((0, 0), (rows, n0))
            .copy_from(&w.entries().rows(0, rows));
        let padded = WeightMatrix::new(padded);
        let direct = exact_linear_mi(&padded, &cov, sigma2).map_err(err)?;
        let factored = factor_check_multilayer(&padded, &widths, &cov, sigma2).map_err(err)?;
        let d = (direct - factored).abs();
        ensure(d <= 1e-12, || {
            format!("instance {i}, widths {widths:?}: {d:e}")
        })?;
        worst = worst.max(d);
    }
    Ok(format!(
        "20 stacks, collapse exact, worst factorization drift {worst:.2e}"
    ))
}

fn relu_large_bias() -> Outcome {
    let s = model_spectrum(&SpectrumModel::ExpDecay { rate: 0.5 }, 4).map_err(err)?;
    let cov = s.to_diagonal_covariance();
    let mc = MCConfig::new(20_000, 20_000, 7).map_err(err)?;
    let report = verify_relu_theorem(3.0, &cov, 1.0, 3, &[2.0, 4.0, 8.0], &mc).map_err(err)?;
    let gaps: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.gap))
        .collect();
    let monotone = report.rows.windows(2).all(|p| {
        p[1].gap <= p[0].gap + 3.0 * (p[0].std_error.powi(2) + p[1].std_error.powi(2)).sqrt()
    });
    ensure(monotone, || format!("gaps not non-increasing: {gaps:?}"))?;
    let last = report.rows.last().unwrap();
    let tol = (3.0 * last.std_error).max(0.02);
    ensure(last.gap.abs() <= tol, || {
        format!("final gap {} > {tol}", last.gap)
    })?;
    Ok(format!(
        "gaps {gaps:?} at scales [2, 4, 8], final tolerance {tol:.4}"
    ))
}

fn entropy_ordering() -> Outcome {
    let mc = MCConfig::new(3000, 3000, 13).map_err(err)?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50 {
        let mut rng = common::rng(80_000 + i);
        let n0 = rng.random_range(1..=4);
        let n1 = rng.random_range(1..=3);
        let cov = common::covariance(&mut rng, n0);
        let sigma2 = common::sigma2(&mut rng);
        let f = sigma2 * rng.random_range(0.1..5.0);
        let w = WeightMatrix::new(random_weights(&mut rng, n1, n0, f));
        let b = DVector::from_fn(n1, |_, _| rng.random_range(-2.0..2.0));
        let model = ReluModel::new(w, b, sigma2).map_err(err)?;
        let r = verify_entropy_ordering(&model, &cov, &mc).map_err(err)?;
        ensure(r.pass, || {
            format!(
                "instance {i}: difference {} > 3 x {}",
                r.difference, r.combined_std_error
            )
        })?;
        worst = worst.max(r.difference / r.combined_std_error);
    }
    Ok(format!(
        "50 (W, b) pairs, largest difference {worst:.2} combined std errors"
    ))
}

fn g_bound_machinery() -> Outcome {
    let g = g_bound(0.1, 1.0, 1).map_err(err)?;
    ensure((g - 1.29394).abs() <= 5e-6, || format!("g(0.1) = {g}"))?;
    let hand = 0.4 * 5f64.ln() + 2.0 * (-0.1 * 0.1f64.ln() - 0.9 * 0.9f64.ln());
    ensure((g - hand).abs() <= 1e-9, || {
        format!("g(0.1) = {g} vs {hand}")
    })?;
    for delta in [1.0 / std::f64::consts::E, 0.5, 1.0] {
        ensure(g_bound(delta, 1.0, 1).is_err(), || {
            format!("accepted delta {delta}")
        })?;
    }
    let tiny: Vec<f64> = (1..=15)
        .map(|k| g_bound(10f64.powi(-k), 1.0, 1).unwrap())
        .collect();
    ensure(
        tiny.windows(2).all(|w| w[1] < w[0]) && tiny[14] < 1e-12,
        || format!("{tiny:?}"),
    )?;
    Ok(format!("g(0.1) = {g:.9}"))
}

fn bijective_invariance() -> Outcome {
    let mc = MCConfig::new(4000, 4000, 17).map_err(err)?;
    let mut worst = 0.0_f64;
    for i in 0..10 {
        let mut rng = common::rng(100_000 + i);
        let n0 = rng.random_range(1..=4);
        let n1 = rng.random_range(1..=3);
        let cov = common::covariance(&mut rng, n0);
        let sigma2 = common::sigma2(&mut rng);
        let f = sigma2 * rng.random_range(0.1..3.0);
        let w = WeightMatrix::new(random_weights(&mut rng, n1, n0, f));
        let linear = ChannelModel::linear(w, sigma2).map_err(err)?;
        let tanh = ChannelModel {
            kind: ChannelKind::Bijective(BijectiveActivation::Tanh),
            ..linear.clone()
        };
        let a = estimate_mi(&linear, &cov, &mc).map_err(err)?;
        let b = estimate_mi(&tanh, &cov, &mc).map_err(err)?;
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        let d = (a.value - b.value).abs();
        ensure(d <= 3.0 * se, || {
            format!(
                "instance {i}: linear {} vs tanh {} (se {se})",
                a.value, b.value
            )
        })?;
        worst = worst.max(d / se);
    }
    Ok(format!(
        "10 instances, largest difference {worst:.2} std errors"
    ))
}

fn determinism() -> Outcome {
    let s = model_spectrum(&SpectrumModel::ExpDecay { rate: 0.5 }, 4).map_err(err)?;
    let cfg = VerifyConfig {
        seed: 42,
        ..VerifyConfig::default()
    };
    let run = |threads: usize| -> Result<String, String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| e.to_string())?;
        let report = pool.install(|| run_verification(&s, &cfg)).map_err(err)?;
        serde_json::to_string_pretty(&report).map_err(|e| e.to_string())
    };
    let first = run(1)?;
    for threads in [1, 3] {
        ensure(run(threads)? == first, || {
            format!("report differs with {threads} threads")
        })?;
    }
    Ok(format!("3 runs, {} bytes each", first.len()))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Option<u64>, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("achievability", Some(10), achievability),
        ("optimality", Some(60), optimality),
        ("breakpoint monotonicity", Some(5), breakpoint_monotonicity),
        ("piecewise consistency", Some(5), piecewise_consistency),
        ("convolution", Some(60), convolution),
        ("multilayer", Some(10), multilayer),
        ("relu large bias", Some(300), relu_large_bias),
        ("entropy ordering", Some(300), entropy_ordering),
        ("g bound", Some(1), g_bound_machinery),
        ("bijective invariance", Some(180), bijective_invariance),
        ("determinism", None, determinism),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let slow = limit.is_some_and(|s| elapsed > Duration::from_secs(s));
        let budget = limit.map_or(String::new(), |s| format!(" / {s}s"));
        let (status, detail) = match (&outcome, slow) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("too slow; {d}")),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if status == "FAIL" {
            failures += 1;
        }
        println!(
            "criterion {:>2} {name}: {status} ({detail}; {:.2}s{budget})",
            i + 1,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
