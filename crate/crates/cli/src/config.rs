//! Run configuration: defaults, then the JSON file, then flags.

use std::fs;
use std::path::Path;

use mmi_core::{
    curve_preset, linear_grid, model_spectrum, Activation, ArchitectureSpec, CurvePreset, Family,
    Spectrum, SpectrumModel, VerifyConfig,
};
use serde::Deserialize;

use crate::args::{CommonArgs, CurveArgs, MmiArgs, OutputFormat, Panel, Units, VerifyArgs};
use crate::error::CliError;

/// Mirror of the flags, all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub arch: Option<String>,
    pub activation: Option<Activation>,
    pub spectrum: Option<String>,
    pub sigma2: Option<f64>,
    #[serde(rename = "F")]
    pub budget: Option<f64>,
    #[serde(rename = "F_grid")]
    pub grid: Option<String>,
    pub units: Option<Units>,
    pub out: Option<OutputFormat>,
    pub seed: Option<u64>,
    pub verify: Option<VerifyConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))
    }
}

/// Settings shared by every subcommand after merging.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub arch: ArchitectureSpec,
    pub spectrum: Spectrum,
    pub sigma2: f64,
    pub units: Units,
    pub out: OutputFormat,
}

fn load_file(common: &CommonArgs) -> Result<FileConfig, CliError> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::default()),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, field: &str) -> Result<Vec<T>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::config(field, format!("cannot parse {s:?} as a number")))
        })
        .collect()
}

pub fn parse_arch(text: &str) -> Result<ArchitectureSpec, CliError> {
    let (kind, rest) = text
        .split_once(':')
        .ok_or_else(|| CliError::config("arch", format!("expected KIND:DIMS, got {text:?}")))?;
    let dims: Vec<usize> = parse_list(rest, "arch")?;
    let arch = match (kind, dims.as_slice()) {
        ("fc", &[n0, n1]) => ArchitectureSpec::fully_connected(n0, n1),
        ("conv", &[n0, nb, nf]) => ArchitectureSpec::conv(n0, nb, nf),
        ("mlp", [n0, widths @ ..]) if !widths.is_empty() => {
            ArchitectureSpec::multilayer(*n0, widths.to_vec())
        }
        _ => {
            return Err(CliError::config(
                "arch",
                format!("expected fc:N0,N1 | conv:N0,NB,Nf | mlp:N0,N1,...; got {text:?}"),
            ))
        }
    };
    arch.map_err(|e| CliError::config("arch", e.to_string()))
}

fn parse_activation(text: &str) -> Result<Activation, CliError> {
    serde_json::from_value(serde_json::Value::String(text.to_ascii_lowercase())).map_err(|_| {
        CliError::config(
            "activation",
            format!("expected linear, relu or bijective; got {text:?}"),
        )
    })
}

pub fn parse_spectrum(text: &str, n: usize) -> Result<Spectrum, CliError> {
    let bad = |msg: String| CliError::config("spectrum", msg);
    let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
    let spectrum = match kind {
        "exp" => {
            let rate: f64 = rest
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad rate {rest:?}")))?;
            model_spectrum(&SpectrumModel::ExpDecay { rate }, n)
        }
        "harmonic" if rest.is_empty() => model_spectrum(&SpectrumModel::Harmonic, n),
        "list" => model_spectrum(&SpectrumModel::Explicit(parse_list(rest, "spectrum")?), n),
        "file" => {
            let body =
                fs::read_to_string(rest).map_err(|e| bad(format!("cannot read {rest}: {e}")))?;
            let s = if rest.ends_with(".json") {
                mmi_core::spectrum::parse_spectrum_json(&body)
            } else {
                mmi_core::spectrum::parse_covariance_csv(&body).map(|c| c.eigen().spectrum.clone())
            };
            s.and_then(|s| model_spectrum(&SpectrumModel::Explicit(s.values().to_vec()), n))
        }
        _ => {
            return Err(bad(format!(
                "expected exp:RATE | harmonic | file:PATH | list:V1,...; got {text:?}"
            )))
        }
    };
    spectrum.map_err(|e| bad(e.to_string()))
}

/// `LO:HI:N`, or an explicit ascending list `F1,F2,...`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    if !text.contains(':') {
        let grid: Vec<f64> = parse_list(text, "F-grid")?;
        if grid.iter().any(|f| !(f.is_finite() && *f >= 0.0))
            || grid.windows(2).any(|w| w[1] < w[0])
        {
            return Err(CliError::config(
                "F-grid",
                "budgets must be non-negative and ascending".into(),
            ));
        }
        return Ok(grid);
    }
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || CliError::config("F-grid", format!("expected LO:HI:N, got {text:?}"));
    let [lo, hi, n] = parts.as_slice() else {
        return Err(bad());
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    if lo < 0.0 {
        return Err(CliError::config(
            "F-grid",
            "budgets must be non-negative".into(),
        ));
    }
    linear_grid(lo, hi, n).map_err(|e| CliError::config("F-grid", e.to_string()))
}

fn check_sigma2(sigma2: f64) -> Result<f64, CliError> {
    if sigma2.is_finite() && sigma2 > 0.0 {
        Ok(sigma2)
    } else {
        Err(CliError::config(
            "sigma2",
            format!("must be positive, got {sigma2}"),
        ))
    }
}

fn check_budget(f: f64) -> Result<f64, CliError> {
    if f.is_finite() && f >= 0.0 {
        Ok(f)
    } else {
        Err(CliError::config(
            "F",
            format!("must be finite and non-negative, got {f}"),
        ))
    }
}

fn resolve(
    common: &CommonArgs,
    file: &FileConfig,
    preset: Option<&mmi_core::PresetSetup>,
) -> Result<Resolved, CliError> {
    let arch_text = common.arch.as_ref().or(file.arch.as_ref());
    let mut arch = match (arch_text, preset) {
        (Some(t), _) => parse_arch(t)?,
        (None, Some(p)) => p.arch.clone(),
        (None, None) => return Err(CliError::config("arch", "missing; pass --arch".into())),
    };
    let activation = match &common.activation {
        Some(t) => Some(parse_activation(t)?),
        None => file.activation,
    };
    if let Some(a) = activation {
        arch = arch.with_activation(a);
    }
    let spectrum = match (common.spectrum.as_ref().or(file.spectrum.as_ref()), preset) {
        (Some(t), _) => parse_spectrum(t, arch.spectrum_len())?,
        (None, Some(p)) if p.spectrum.len() == arch.spectrum_len() => p.spectrum.clone(),
        _ => {
            return Err(CliError::config(
                "spectrum",
                "missing; pass --spectrum".into(),
            ))
        }
    };
    let sigma2 = common
        .sigma2
        .or(file.sigma2)
        .or(preset.map(|p| p.sigma2))
        .unwrap_or(1.0);
    Ok(Resolved {
        arch,
        spectrum,
        sigma2: check_sigma2(sigma2)?,
        units: common.units.or(file.units).unwrap_or(Units::Nats),
        out: common.out.or(file.out).unwrap_or(OutputFormat::Csv),
    })
}

pub fn resolve_breakpoints(common: &CommonArgs) -> Result<Resolved, CliError> {
    resolve(common, &load_file(common)?, None)
}

pub fn resolve_mmi(args: &MmiArgs) -> Result<(Resolved, f64), CliError> {
    let file = load_file(&args.common)?;
    let resolved = resolve(&args.common, &file, None)?;
    let f = args
        .budget
        .or(file.budget)
        .ok_or_else(|| CliError::config("F", "missing; pass --F".into()))?;
    Ok((resolved, check_budget(f)?))
}

pub fn resolve_curve(args: &CurveArgs) -> Result<(Resolved, Vec<f64>), CliError> {
    let file = load_file(&args.common)?;
    let preset = args
        .figure1
        .map(|p| {
            curve_preset(match p {
                Panel::Left => CurvePreset::Left,
                Panel::Right => CurvePreset::Right,
            })
        })
        .transpose()
        .map_err(|e| CliError::config("figure1", e.to_string()))?;
    let resolved = resolve(&args.common, &file, preset.as_ref())?;
    let grid = match (args.grid.as_ref().or(file.grid.as_ref()), &preset) {
        (Some(t), _) => parse_grid(t)?,
        (None, Some(p)) => p.grid.clone(),
        (None, None) => return Err(CliError::config("F-grid", "missing; pass --F-grid".into())),
    };
    if args.gnuplot.is_some() && (args.common.output.is_none() || resolved.out != OutputFormat::Csv)
    {
        return Err(CliError::config(
            "gnuplot",
            "needs CSV written to a file with --output".into(),
        ));
    }
    Ok((resolved, grid))
}

pub fn resolve_verify(args: &VerifyArgs) -> Result<(Resolved, VerifyConfig), CliError> {
    let file = load_file(&args.common)?;
    let mut cfg = file.verify.clone().unwrap_or_default();
    let mut common = args.common.clone();
    if common.arch.is_none() && file.arch.is_none() {
        common.arch = Some(format!("fc:4,{}", cfg.n1));
    }
    if common.spectrum.is_none() && file.spectrum.is_none() {
        common.spectrum = Some("exp:0.5".into());
    }
    let resolved = resolve(&common, &file, None)?;
    let Family::FullyConnected { n1, .. } = resolved.arch.family else {
        return Err(CliError::config(
            "arch",
            "verify supports fc:N0,N1 only".into(),
        ));
    };
    cfg.n1 = n1;
    cfg.sigma2 = check_sigma2(args.common.sigma2.or(file.sigma2).unwrap_or(cfg.sigma2))?;
    cfg.budget = check_budget(args.budget.or(file.budget).unwrap_or(cfg.budget))?;
    cfg.seed = args.common.seed.or(file.seed).unwrap_or(cfg.seed);
    if let Some(n) = args.mc_samples {
        cfg.mc_samples = n;
    }
    if let Some(n) = args.instances {
        cfg.random_instances = n;
    }
    if let Some(offset) = args.closed_form_offset {
        cfg.closed_form_offset = offset;
    }
    Ok((resolved, cfg))
}
