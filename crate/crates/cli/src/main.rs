//! Command-line front end: estimation on trial CSVs, simulation studies,
//! survival curves for plotting and simulated data sets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use surropt_core::ErrorKind;

mod commands;
mod config;

use config::{Format, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] surropt_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn kind(&self) -> (&'static str, u8) {
        match self {
            CliError::Input(_) | CliError::Io(_) => ("input", 2),
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => ("input", 2),
                ErrorKind::Estimation => ("estimation", 3),
                ErrorKind::Inference => ("inference", 4),
            },
        }
    }
}

#[derive(Serialize)]
struct ErrorPayload<'a> {
    error: &'a str,
    exit_code: u8,
    message: String,
}

#[derive(Debug, Parser)]
#[command(
    name = "surropt",
    version,
    about = "Proportion of treatment effect explained by a surrogate"
)]
struct Cli {
    /// Worker threads; SURROPT_THREADS overrides this
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// TOML file with default values for any long flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate PTE, PTE_Ind and their RMST versions on a trial CSV
    Estimate(Flags),
    /// Run a simulation study and write its summary table
    Simulate(Flags),
    /// Kaplan-Meier curves of overall and progression-free survival per arm
    Curves(Flags),
    /// Write one simulated trial as CSV
    Generate(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Input CSV with columns id,arm,x,delta,s_time
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Output file; standard output when absent
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Primary-outcome horizon
    #[arg(long)]
    t: Option<f64>,
    /// Landmark times, comma separated
    #[arg(long, value_delimiter = ',')]
    t0: Option<Vec<f64>>,
    /// RMST horizon; defaults to t
    #[arg(long)]
    tau: Option<f64>,
    /// Perturbation replicates; 0 gives point estimates only
    #[arg(long, visible_alias = "B")]
    perturb: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Surrogate-time grid size
    #[arg(long)]
    grid: Option<usize>,
    /// Relative density floor below which grid points are dropped
    #[arg(long)]
    eps_rel: Option<f64>,
    /// RMST node spacing as a fraction of tau
    #[arg(long)]
    dt_frac: Option<f64>,
    /// Smallest treatment effect accepted as a denominator
    #[arg(long)]
    min_delta: Option<f64>,
    /// pooled, per-arm or a fixed positive number
    #[arg(long)]
    bandwidth: Option<String>,
    /// exponential, unit or gamma:<shape>
    #[arg(long)]
    multiplier: Option<String>,
    /// normal or quantile
    #[arg(long)]
    ci: Option<String>,
    /// Simulation settings, comma separated
    #[arg(long, value_delimiter = ',')]
    setting: Option<Vec<u8>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// paired or verbatim
    #[arg(long)]
    reading: Option<String>,
    /// Potential-outcome sample size for the oracle truths
    #[arg(long)]
    oracle_m: Option<usize>,
}

impl Flags {
    fn over(self, file: RunConfig) -> RunConfig {
        RunConfig {
            input: self.input.or(file.input),
            output: self.output.or(file.output),
            format: self.format.or(file.format),
            t: self.t.or(file.t),
            t0: self.t0.or(file.t0),
            tau: self.tau.or(file.tau),
            perturb: self.perturb.or(file.perturb),
            seed: self.seed.or(file.seed),
            grid: self.grid.or(file.grid),
            eps_rel: self.eps_rel.or(file.eps_rel),
            dt_frac: self.dt_frac.or(file.dt_frac),
            min_delta: self.min_delta.or(file.min_delta),
            bandwidth: self.bandwidth.or(file.bandwidth),
            multiplier: self.multiplier.or(file.multiplier),
            ci: self.ci.or(file.ci),
            setting: self.setting.or(file.setting),
            reps: self.reps.or(file.reps),
            n: self.n.or(file.n),
            reading: self.reading.or(file.reading),
            oracle_m: self.oracle_m.or(file.oracle_m),
            threads: file.threads,
        }
    }
}

fn threads(cli: Option<usize>, file: Option<usize>) -> Result<Option<usize>, CliError> {
    if let Ok(v) = std::env::var("SURROPT_THREADS") {
        return v.trim().parse().map(Some).map_err(|_| {
            CliError::Input(format!(
                "SURROPT_THREADS must be a positive integer, got '{v}'"
            ))
        });
    }
    Ok(cli.or(file))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(k) = threads(cli.threads, file.threads)? {
        if k == 0 {
            return Err(CliError::Input("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Estimate(f) => commands::estimate(&f.over(file)),
        Command::Simulate(f) => commands::simulate(&f.over(file)),
        Command::Curves(f) => commands::curves(&f.over(file)),
        Command::Generate(f) => commands::generate(&f.over(file)),
    }
}

fn fail(kind: &str, code: u8, message: String) -> ExitCode {
    let payload = ErrorPayload {
        error: kind,
        exit_code: code,
        message: message.replace('\n', " "),
    };
    eprintln!(
        "{}",
        serde_json::to_string(&payload).expect("payload serializes")
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            return fail("input", 2, first.trim_start_matches("error: ").to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = e.kind();
            fail(kind, code, e.to_string())
        }
    }
}
