//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "mmi",
    version,
    about = "Maximum mutual information of Gaussian-input layers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// MMI at a single budget.
    Mmi(MmiArgs),
    /// MMI over a grid of budgets.
    Curve(CurveArgs),
    /// Regime breakpoints ρ_1..ρ_Ñ.
    Breakpoints(CommonArgs),
    /// Cross-check the closed form against the numerical oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Nats,
    Bits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Panel {
    Left,
    Right,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// fc:N0,N1 | conv:N0,NB,Nf | mlp:N0,N1,...,NK
    #[arg(long)]
    pub arch: Option<String>,
    /// linear | relu | bijective
    #[arg(long)]
    pub activation: Option<String>,
    /// exp:RATE | harmonic | file:PATH | list:V1,V2,...
    #[arg(long)]
    pub spectrum: Option<String>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, value_enum)]
    pub units: Option<Units>,
    #[arg(long, value_enum)]
    pub out: Option<OutputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON run configuration; flags take precedence over its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MmiArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Frobenius budget.
    #[arg(long = "F")]
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// LO:HI:N inclusive grid, or F1,F2,... ascending.
    #[arg(long = "F-grid")]
    pub grid: Option<String>,
    /// Reference setup: N0=100, N1=50, σ²=1 with exp:0.1 (left) or harmonic (right).
    #[arg(long, value_enum)]
    pub figure1: Option<Panel>,
    /// Also write a gnuplot script that plots the CSV written with --output.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "F")]
    pub budget: Option<f64>,
    /// Outer and inner Monte-Carlo sample counts.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// Extra random instances for the deterministic checks.
    #[arg(long)]
    pub instances: Option<usize>,
    /// Adds this many nats to every closed-form value (fault injection).
    #[arg(long, hide = true)]
    pub closed_form_offset: Option<f64>,
}
