//! `mmi`: closed-form maximum mutual information from the command line.

mod args;
mod config;
mod error;
mod output;

use std::fs;
use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use mmi_core::{
    breakpoints, evaluate, mmi_curve, nats_to_bits, run_verification, ChannelParams, MmiResult,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::args::{Cli, Command, CurveArgs, MmiArgs, Units, VerifyArgs};
use crate::config::Resolved;
use crate::error::CliError;

#[derive(Serialize)]
struct MmiRow {
    #[serde(rename = "F")]
    budget: f64,
    mmi: f64,
    #[serde(rename = "regime_K")]
    regime_k: usize,
    active_components: usize,
    n_tilde: usize,
}

impl MmiRow {
    fn new(budget: f64, r: &MmiResult, units: Units) -> Self {
        Self {
            budget,
            mmi: match units {
                Units::Nats => r.nats,
                Units::Bits => nats_to_bits(r.nats),
            },
            regime_k: r.regime_k,
            active_components: r.active_components,
            n_tilde: r.n_tilde,
        }
    }
}

#[derive(Serialize)]
struct BreakpointRow {
    k: usize,
    rho: f64,
}

#[derive(Serialize)]
struct CheckRow<'a> {
    check: &'a str,
    pass: bool,
    metric: f64,
    threshold: f64,
    detail: &'a str,
}

fn header(r: &Resolved) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("units".into(), json!(r.units));
    m.insert("sigma2".into(), json!(r.sigma2));
    m.insert("architecture".into(), json!(r.arch));
    m
}

fn cmd_mmi(args: &MmiArgs) -> Result<bool, CliError> {
    let (r, f) = config::resolve_mmi(args)?;
    let result = evaluate(&r.arch, &r.spectrum, ChannelParams::new(r.sigma2, f)?)?;
    let mut out = output::open(args.common.output.as_deref())?;
    output::write_table(
        &mut out,
        r.out,
        "rows",
        &[MmiRow::new(f, &result, r.units)],
        header(&r),
    )?;
    Ok(true)
}

fn cmd_curve(args: &CurveArgs) -> Result<bool, CliError> {
    let (r, grid) = config::resolve_curve(args)?;
    let curve = mmi_curve(&r.arch, &r.spectrum, r.sigma2, &grid)?;
    let rows: Vec<MmiRow> = curve
        .iter()
        .map(|(f, res)| MmiRow::new(*f, res, r.units))
        .collect();
    let mut out = output::open(args.common.output.as_deref())?;
    output::write_table(&mut out, r.out, "rows", &rows, header(&r))?;
    if let (Some(script), Some(csv_path)) = (&args.gnuplot, &args.common.output) {
        let units = if r.units == Units::Bits {
            "bits"
        } else {
            "nats"
        };
        fs::write(script, output::gnuplot_script(csv_path, units))?;
    }
    Ok(true)
}

fn cmd_breakpoints(common: &args::CommonArgs) -> Result<bool, CliError> {
    let r = config::resolve_breakpoints(common)?;
    let bp = breakpoints(&r.spectrum, r.sigma2, r.arch.n_tilde())?;
    let rows: Vec<BreakpointRow> = bp
        .rho()
        .iter()
        .enumerate()
        .map(|(i, &rho)| BreakpointRow { k: i + 1, rho })
        .collect();
    let mut out = output::open(common.output.as_deref())?;
    output::write_table(&mut out, r.out, "breakpoints", &rows, header(&r))?;
    Ok(true)
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool, CliError> {
    let (r, cfg) = config::resolve_verify(args)?;
    let report = run_verification(&r.spectrum, &cfg)?;
    for c in &report.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        eprintln!(
            "{status} {} (metric {:e}, threshold {:e}): {}",
            c.name, c.metric, c.threshold, c.detail
        );
    }
    let mut out = output::open(args.common.output.as_deref())?;
    match r.out {
        args::OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(std::io::Error::other)?;
            writeln!(out)?;
            out.flush()?;
        }
        args::OutputFormat::Csv => {
            let rows: Vec<CheckRow> = report
                .checks
                .iter()
                .map(|c| CheckRow {
                    check: &c.name,
                    pass: c.pass,
                    metric: c.metric,
                    threshold: c.threshold,
                    detail: &c.detail,
                })
                .collect();
            output::write_table(&mut out, r.out, "checks", &rows, Map::new())?;
        }
    }
    Ok(report.pass)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(text) = std::env::var("MMI_THREADS") else {
        return Ok(());
    };
    let n: usize = text.trim().parse().map_err(|_| {
        CliError::config(
            "MMI_THREADS",
            format!("expected a non-negative integer, got {text:?}"),
        )
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config("MMI_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Mmi(a) => cmd_mmi(a),
        Command::Curve(a) => cmd_curve(a),
        Command::Breakpoints(a) => cmd_breakpoints(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
