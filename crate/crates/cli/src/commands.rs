use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use surropt_core::data::{ingest_csv, write_csv, Arm, TrialDataset};
use surropt_core::inference::{perturbed_each, point_each, Estimand, EstimatorParams};
use surropt_core::sim::{generate_setting, run_study, SettingId, SimSetting, StudyConfig};
use surropt_core::survival::{kaplan_meier_greenwood, KmPoint};

use crate::config::{parse_reading, tuning, Format, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Column order of the estimate report.
pub const REPORT_COLUMNS: [&str; 11] = [
    "t0",
    "PTE",
    "PTE_se",
    "PTE_Ind",
    "PTE_Ind_se",
    "PTE_rmst",
    "PTE_rmst_se",
    "PTE_rmst_Ind",
    "PTE_rmst_Ind_se",
    "Low",
    "Low_rmst",
];

const REPORTED: [Estimand; 4] = [
    Estimand::Pte,
    Estimand::PteInd,
    Estimand::PteRmst,
    Estimand::PteRmstInd,
];

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub t0: f64,
    #[serde(rename = "PTE")]
    pub pte: f64,
    #[serde(rename = "PTE_se")]
    pub pte_se: Option<f64>,
    #[serde(rename = "PTE_Ind")]
    pub pte_ind: f64,
    #[serde(rename = "PTE_Ind_se")]
    pub pte_ind_se: Option<f64>,
    #[serde(rename = "PTE_rmst")]
    pub pte_rmst: f64,
    #[serde(rename = "PTE_rmst_se")]
    pub pte_rmst_se: Option<f64>,
    #[serde(rename = "PTE_rmst_Ind")]
    pub pte_rmst_ind: f64,
    #[serde(rename = "PTE_rmst_Ind_se")]
    pub pte_rmst_ind_se: Option<f64>,
    /// Lower end of the 95% interval for `PTE`.
    #[serde(rename = "Low")]
    pub low: Option<f64>,
    /// Lower end of the 95% interval for `PTE_rmst`.
    #[serde(rename = "Low_rmst")]
    pub low_rmst: Option<f64>,
    pub labels_swapped: bool,
}

impl ReportRow {
    fn cells(&self) -> [Option<f64>; 11] {
        [
            Some(self.t0),
            Some(self.pte),
            self.pte_se,
            Some(self.pte_ind),
            self.pte_ind_se,
            Some(self.pte_rmst),
            self.pte_rmst_se,
            Some(self.pte_rmst_ind),
            self.pte_rmst_ind_se,
            self.low,
            self.low_rmst,
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub input: PathBuf,
    pub n: usize,
    pub t: f64,
    pub tau: f64,
    pub replicates: usize,
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

fn read_input(cfg: &RunConfig) -> Result<(PathBuf, TrialDataset), CliError> {
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| CliError::Input("--input is required".into()))?;
    let file = File::open(&path)
        .map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))?;
    Ok((path, ingest_csv(file)?))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_human(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

pub fn estimate(cfg: &RunConfig) -> Result<(), CliError> {
    let (input, data) = read_input(cfg)?;
    let t = cfg
        .t
        .ok_or_else(|| CliError::Input("--t is required".into()))?;
    let t0s = cfg.t0.clone().unwrap_or_default();
    if t0s.is_empty() {
        return Err(CliError::Input("--t0 needs at least one landmark".into()));
    }
    let tau = cfg.tau.unwrap_or(t);
    let tune = tuning(cfg, 500)?;

    let mut rows = Vec::with_capacity(t0s.len());
    for &t0 in &t0s {
        let params = EstimatorParams {
            tau: Some(tau),
            opts: tune.opts,
            step_fraction: tune.step_fraction,
            ..EstimatorParams::new(t, t0)
        };
        // Point estimate, standard error and interval lower end per estimand.
        let mut cells = Vec::with_capacity(REPORTED.len());
        let mut swapped = false;
        match &tune.perturbation {
            Some(p) => {
                for r in perturbed_each(&data, &REPORTED, &params, p)? {
                    let r = r?;
                    swapped |= r.labels_swapped && !r.estimand.is_rmst();
                    cells.push((r.point, Some(r.se), Some(r.ci.0)));
                }
            }
            None => {
                for r in point_each(&data, &REPORTED, &params) {
                    cells.push((r?, None, None));
                }
            }
        }
        rows.push(ReportRow {
            t0,
            pte: cells[0].0,
            pte_se: cells[0].1,
            pte_ind: cells[1].0,
            pte_ind_se: cells[1].1,
            pte_rmst: cells[2].0,
            pte_rmst_se: cells[2].1,
            pte_rmst_ind: cells[3].0,
            pte_rmst_ind_se: cells[3].1,
            low: cells[0].2,
            low_rmst: cells[2].2,
            labels_swapped: swapped,
        });
    }
    let report = EstimateReport {
        schema_version: SCHEMA_VERSION,
        input,
        n: data.len(),
        t,
        tau,
        replicates: tune.perturbation.map_or(0, |p| p.replicates),
        seed: tune.perturbation.map_or(0, |p| p.seed),
        rows,
    };

    let mut out = sink(cfg.output.as_deref())?;
    match cfg.format.unwrap_or(Format::Json) {
        Format::Json => writeln!(
            out,
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        )?,
        Format::Csv => {
            writeln!(out, "{}", REPORT_COLUMNS.join(","))?;
            for r in &report.rows {
                let line: Vec<String> = r.cells().iter().map(|&c| fmt_cell(c)).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
        Format::Human => {
            writeln!(
                out,
                "n = {}, t = {}, tau = {}, B = {}",
                report.n, t, tau, report.replicates
            )?;
            let head: Vec<String> = REPORT_COLUMNS.iter().map(|c| format!("{c:>16}")).collect();
            writeln!(out, "{}", head.join(""))?;
            for r in &report.rows {
                let line: Vec<String> = r
                    .cells()
                    .iter()
                    .map(|&c| format!("{:>16}", fmt_human(c)))
                    .collect();
                writeln!(out, "{}", line.join(""))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn settings(cfg: &RunConfig) -> Result<Vec<SimSetting>, CliError> {
    let reading = match &cfg.reading {
        Some(r) => parse_reading(r).map_err(CliError::Input)?,
        None => Default::default(),
    };
    let ids = cfg.setting.clone().unwrap_or_else(|| vec![1, 2, 3]);
    if ids.is_empty() {
        return Err(CliError::Input("--setting needs at least one id".into()));
    }
    ids.into_iter()
        .map(|k| Ok(SimSetting::new(SettingId::from_number(k)?).with_reading(reading)))
        .collect()
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let settings = settings(cfg)?;
    let tune = tuning(cfg, 500)?;
    let mut study = StudyConfig::new(
        settings,
        cfg.t0.clone().unwrap_or_else(|| vec![1.0, 2.0, 3.0]),
        cfg.reps.unwrap_or(500),
        cfg.n.unwrap_or(2000),
        cfg.seed.unwrap_or(1),
    );
    study.opts = tune.opts;
    study.step_fraction = tune.step_fraction;
    study.perturbation = tune.perturbation;
    study.tau = cfg.tau;
    if let Some(m) = cfg.oracle_m {
        study.oracle_m = m;
    }
    if let Some(t) = cfg.t {
        for s in &mut study.settings {
            s.t = t;
        }
    }
    let table = run_study(&study)?;

    let mut out = sink(cfg.output.as_deref())?;
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => writeln!(out, "{}", table.to_json())?,
        Format::Csv => table.write_csv(&mut out)?,
        Format::Human => {
            writeln!(
                out,
                "{:>8}{:>6}{:>12}{:>9}{:>9}{:>9}{:>9}{:>9}{:>9}{:>10}",
                "setting", "t0", "metric", "truth", "est", "bias", "ese", "ase", "cp", "failures"
            )?;
            for r in &table.rows {
                writeln!(
                    out,
                    "{:>8}{:>6}{:>12}{:>9.3}{:>9.3}{:>9.3}{:>9.3}{:>9}{:>9}{:>10}",
                    r.setting,
                    r.t0,
                    r.metric.name(),
                    r.truth,
                    r.est,
                    r.bias,
                    r.ese,
                    fmt_human(r.ase),
                    fmt_human(r.cp),
                    r.failures
                )?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Curve {
    pub endpoint: &'static str,
    pub arm: u8,
    pub points: Vec<KmPoint>,
}

#[derive(Debug, Clone, Serialize)]
struct CurveReport {
    schema_version: u32,
    curves: Vec<Curve>,
}

/// Kaplan-Meier curves per arm for overall survival (`x`, `delta`) and for
/// progression-free survival, the earlier of the surrogate and the primary
/// event.
pub fn km_curves(data: &TrialDataset) -> Vec<Curve> {
    let mut curves = Vec::with_capacity(4);
    for endpoint in ["OS", "PFS"] {
        for arm in [Arm::Control, Arm::Treated] {
            let (times, events): (Vec<f64>, Vec<bool>) = data
                .records()
                .iter()
                .filter(|r| r.arm == arm)
                .map(|r| match (endpoint, r.s_time) {
                    ("PFS", Some(s)) => (s, true),
                    _ => (r.x, r.delta),
                })
                .unzip();
            curves.push(Curve {
                endpoint,
                arm: arm.label(),
                points: kaplan_meier_greenwood(&times, &events),
            });
        }
    }
    curves
}

pub fn curves(cfg: &RunConfig) -> Result<(), CliError> {
    let (_, data) = read_input(cfg)?;
    let curves = km_curves(&data);
    let mut out = sink(cfg.output.as_deref())?;
    match cfg.format.unwrap_or(Format::Csv) {
        Format::Json => {
            let report = CurveReport {
                schema_version: SCHEMA_VERSION,
                curves,
            };
            writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&report).expect("curves serialize")
            )?;
        }
        Format::Csv | Format::Human => {
            writeln!(out, "endpoint,arm,time,survival,lower,upper,n_risk,n_event")?;
            for c in &curves {
                for p in &c.points {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        c.endpoint,
                        c.arm,
                        p.time,
                        p.survival,
                        p.lower,
                        p.upper,
                        p.n_risk,
                        p.n_event
                    )?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let settings = settings(cfg)?;
    if settings.len() != 1 {
        return Err(CliError::Input(
            "generate takes exactly one --setting".into(),
        ));
    }
    let (_, data) = generate_setting(&settings[0], cfg.n.unwrap_or(2000), cfg.seed.unwrap_or(1))?;
    let mut out = sink(cfg.output.as_deref())?;
    write_csv(&data, &mut out)?;
    out.flush()?;
    Ok(())
}
