use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use serde::Deserialize;

use surropt_core::inference::{CiMethod, MultiplierLaw, PerturbationConfig};
use surropt_core::pte::{BandwidthMode, EstimateOptions};
use surropt_core::sim::GeneratorReading;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Human,
}

/// Values read from a TOML file. Every key mirrors a long flag, with dashes
/// replaced by underscores. Flags given on the command line win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub t: Option<f64>,
    pub t0: Option<Vec<f64>>,
    pub tau: Option<f64>,
    pub perturb: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    pub eps_rel: Option<f64>,
    pub dt_frac: Option<f64>,
    pub min_delta: Option<f64>,
    pub bandwidth: Option<String>,
    pub multiplier: Option<String>,
    pub ci: Option<String>,
    pub setting: Option<Vec<u8>>,
    pub reps: Option<usize>,
    pub n: Option<usize>,
    pub reading: Option<String>,
    pub oracle_m: Option<usize>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| {
            let msg = e.message().replace('\n', " ");
            CliError::Input(format!("config {}: {msg}", path.display()))
        })
    }
}

pub fn parse_bandwidth(s: &str) -> Result<BandwidthMode, String> {
    match s {
        "pooled" => Ok(BandwidthMode::Pooled),
        "per-arm" => Ok(BandwidthMode::PerArm),
        other => f64::from_str(other).map(BandwidthMode::Fixed).map_err(|_| {
            format!("bandwidth must be 'pooled', 'per-arm' or a positive number, got '{other}'")
        }),
    }
}

pub fn parse_multiplier(s: &str) -> Result<MultiplierLaw, String> {
    match s {
        "exponential" => Ok(MultiplierLaw::Exponential),
        "unit" => Ok(MultiplierLaw::Unit),
        other => other
            .strip_prefix("gamma:")
            .and_then(|v| v.parse().ok())
            .map(|shape| MultiplierLaw::Gamma { shape })
            .ok_or_else(|| {
                format!(
                    "multiplier must be 'exponential', 'unit' or 'gamma:<shape>', got '{other}'"
                )
            }),
    }
}

pub fn parse_ci(s: &str) -> Result<CiMethod, String> {
    match s {
        "normal" => Ok(CiMethod::Normal),
        "quantile" => Ok(CiMethod::Quantile),
        other => Err(format!("ci must be 'normal' or 'quantile', got '{other}'")),
    }
}

pub fn parse_reading(s: &str) -> Result<GeneratorReading, String> {
    match s {
        "paired" => Ok(GeneratorReading::Paired),
        "verbatim" => Ok(GeneratorReading::Verbatim),
        other => Err(format!(
            "reading must be 'paired' or 'verbatim', got '{other}'"
        )),
    }
}

/// Estimation tuning shared by the estimate and simulate commands.
#[derive(Debug, Clone, Copy)]
pub struct Tuning {
    pub opts: EstimateOptions,
    pub step_fraction: f64,
    pub perturbation: Option<PerturbationConfig>,
}

pub fn tuning(cfg: &RunConfig, default_b: usize) -> Result<Tuning, CliError> {
    let mut opts = EstimateOptions::default();
    if let Some(g) = cfg.grid {
        opts.grid_size = g;
    }
    if let Some(e) = cfg.eps_rel {
        opts.eps_rel = e;
    }
    if let Some(m) = cfg.min_delta {
        opts.min_delta = m;
    }
    if let Some(b) = &cfg.bandwidth {
        opts.bandwidth = parse_bandwidth(b).map_err(CliError::Input)?;
    }
    opts.validate()?;

    let step_fraction = cfg
        .dt_frac
        .unwrap_or(surropt_core::rmst::DEFAULT_STEP_FRACTION);
    if !(step_fraction > 0.0 && step_fraction <= 1.0) {
        return Err(CliError::Input(format!(
            "dt-frac must be in (0, 1], got {step_fraction}"
        )));
    }

    let b = cfg.perturb.unwrap_or(default_b);
    let perturbation = if b == 0 {
        None
    } else {
        let mut p = PerturbationConfig {
            replicates: b,
            seed: cfg.seed.unwrap_or(1),
            ..Default::default()
        };
        if let Some(m) = &cfg.multiplier {
            p.law = parse_multiplier(m).map_err(CliError::Input)?;
        }
        if let Some(c) = &cfg.ci {
            p.ci = parse_ci(c).map_err(CliError::Input)?;
        }
        p.validate()?;
        Some(p)
    };
    Ok(Tuning {
        opts,
        step_fraction,
        perturbation,
    })
}
