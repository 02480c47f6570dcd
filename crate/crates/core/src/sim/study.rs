//! Monte Carlo study: repeated generation, estimation and perturbation
//! inference, summarised against the oracle truths.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{perturbed_each, point_each, Estimand, EstimatorParams, PerturbationConfig};
use crate::pte::EstimateOptions;
use crate::rmst::DEFAULT_STEP_FRACTION;
use crate::sim::generate::{generate_setting, SimSetting};
use crate::sim::oracle::{OracleSample, OracleTruth};

pub const SCHEMA_VERSION: u32 = 1;
/// Rows where more than this fraction of replicates failed are flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub settings: Vec<SimSetting>,
    pub t0s: Vec<f64>,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    /// Estimands whose point estimates are summarised.
    pub estimands: Vec<Estimand>,
    /// Estimands that also get perturbation intervals. Ignored without
    /// `perturbation`.
    pub perturbed: Vec<Estimand>,
    /// Its `seed` is replaced by one derived per replicate.
    pub perturbation: Option<PerturbationConfig>,
    pub oracle_m: usize,
    pub opts: EstimateOptions,
    pub step_fraction: f64,
    /// RMST horizon; defaults to each setting's `t`.
    pub tau: Option<f64>,
}

impl StudyConfig {
    pub fn new(settings: Vec<SimSetting>, t0s: Vec<f64>, reps: usize, n: usize, seed: u64) -> Self {
        StudyConfig {
            settings,
            t0s,
            reps,
            n,
            seed,
            estimands: Estimand::ALL.to_vec(),
            perturbed: vec![Estimand::Pte, Estimand::PteInd, Estimand::G2],
            perturbation: Some(PerturbationConfig::default()),
            oracle_m: 2_000_000,
            opts: EstimateOptions::default(),
            step_fraction: DEFAULT_STEP_FRACTION,
            tau: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 replicates, got {}",
                self.reps
            )));
        }
        if self.settings.is_empty() || self.t0s.is_empty() || self.estimands.is_empty() {
            return Err(Error::Argument(
                "settings, landmarks and estimands must be non-empty".into(),
            ));
        }
        for s in &self.settings {
            s.validate()?;
            for &t0 in &self.t0s {
                if !(t0 > 0.0 && t0 <= s.t) {
                    return Err(Error::Argument(format!(
                        "landmark {t0} outside (0, {}]",
                        s.t
                    )));
                }
            }
        }
        if self.oracle_m < 1000 {
            return Err(Error::Argument(
                "oracle sample must have at least 1000 draws".into(),
            ));
        }
        if let Some(p) = &self.perturbation {
            p.validate()?;
        }
        self.opts.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub setting: u8,
    pub t0: f64,
    pub metric: Estimand,
    pub truth: f64,
    pub est: f64,
    pub bias: f64,
    pub ese: f64,
    pub ase: Option<f64>,
    pub cp: Option<f64>,
    pub reps: usize,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub setting: u8,
    pub truth: OracleTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyTable {
    pub schema_version: u32,
    pub config: StudyConfig,
    pub truths: Vec<TruthRow>,
    pub rows: Vec<StudyRow>,
}

pub const CSV_COLUMNS: [&str; 12] = [
    "setting", "t0", "metric", "truth", "est", "bias", "ese", "ase", "cp", "reps", "failures",
    "flagged",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

impl StudyTable {
    pub fn row(&self, setting: u8, t0: f64, metric: Estimand) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.setting == setting && r.t0 == t0 && r.metric == metric)
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let map = |e: csv::Error| Error::Validation(format!("csv write failed: {e}"));
        w.write_record(CSV_COLUMNS).map_err(map)?;
        for r in &self.rows {
            w.write_record([
                r.setting.to_string(),
                format!("{}", r.t0),
                r.metric.name().to_string(),
                format!("{}", r.truth),
                format!("{}", r.est),
                format!("{}", r.bias),
                format!("{}", r.ese),
                fmt_opt(r.ase),
                fmt_opt(r.cp),
                r.reps.to_string(),
                r.failures.to_string(),
                r.flagged.to_string(),
            ])
            .map_err(map)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study table serializes")
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for a tagged substream of `seed`.
pub fn substream(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(seed), |acc, &t| mix(acc ^ mix(t)))
}

const TAG_ORACLE: u64 = 1;
const TAG_DATA: u64 = 2;
const TAG_PERTURB: u64 = 3;

#[derive(Debug, Clone, Copy, Default)]
struct Outcome {
    est: Option<f64>,
    se: Option<f64>,
    covered: Option<bool>,
}

fn truth_of(t: &OracleTruth, e: Estimand) -> f64 {
    match e {
        Estimand::Pte => t.pte,
        Estimand::PteInd => t.pte_ind,
        Estimand::G2 => t.g2,
        Estimand::PteRmst => t.pte_rmst,
        Estimand::PteRmstInd => t.pte_rmst_ind,
    }
}

fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)).sqrt()
}

fn one_replicate(
    config: &StudyConfig,
    setting: &SimSetting,
    rep: usize,
    truths: &[OracleTruth],
) -> Vec<Vec<Outcome>> {
    let tag = setting.id.number() as u64;
    let seed = substream(config.seed, &[TAG_DATA, tag, rep as u64]);
    let data = match generate_setting(setting, config.n, seed) {
        Ok((_, d)) => d,
        Err(_) => return vec![vec![Outcome::default(); config.estimands.len()]; config.t0s.len()],
    };
    config
        .t0s
        .iter()
        .enumerate()
        .map(|(k, &t0)| {
            let params = EstimatorParams {
                t: setting.t,
                t0,
                tau: Some(config.tau.unwrap_or(setting.t)),
                opts: config.opts,
                step_fraction: config.step_fraction,
            };
            let mut out = vec![Outcome::default(); config.estimands.len()];
            let (with_se, without): (Vec<usize>, Vec<usize>) = (0..config.estimands.len())
                .partition(|&j| {
                    config.perturbation.is_some() && config.perturbed.contains(&config.estimands[j])
                });
            if let Some(p) = &config.perturbation {
                if !with_se.is_empty() {
                    let which: Vec<Estimand> =
                        with_se.iter().map(|&j| config.estimands[j]).collect();
                    let pc = PerturbationConfig {
                        seed: substream(config.seed, &[TAG_PERTURB, tag, rep as u64, k as u64]),
                        ..*p
                    };
                    if let Ok(res) = perturbed_each(&data, &which, &params, &pc) {
                        for (&j, r) in with_se.iter().zip(res) {
                            if let Ok(iv) = r {
                                let truth = truth_of(&truths[k], config.estimands[j]);
                                out[j] = Outcome {
                                    est: Some(iv.point),
                                    se: Some(iv.se),
                                    covered: Some(iv.ci.0 <= truth && truth <= iv.ci.1),
                                };
                            }
                        }
                    }
                }
            }
            if !without.is_empty() {
                let which: Vec<Estimand> = without.iter().map(|&j| config.estimands[j]).collect();
                for (&j, r) in without.iter().zip(point_each(&data, &which, &params)) {
                    out[j].est = r.ok().filter(|v| v.is_finite());
                }
            }
            out
        })
        .collect()
}

/// Runs the configured study. Results depend only on the configuration,
/// not on the number of threads.
pub fn run_study(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    let mut truths_out = Vec::new();
    let mut rows = Vec::new();
    for setting in &config.settings {
        let tag = setting.id.number() as u64;
        let oracle = OracleSample::draw(
            setting,
            config.oracle_m,
            substream(config.seed, &[TAG_ORACLE, tag]),
        )?;
        let tau = config.tau.unwrap_or(setting.t);
        let truths = config
            .t0s
            .iter()
            .map(|&t0| oracle.truth(setting.t, t0, tau))
            .collect::<Result<Vec<_>>>()?;
        drop(oracle);

        let outcomes: Vec<Vec<Vec<Outcome>>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| one_replicate(config, setting, rep, &truths))
            .collect();

        for (k, &t0) in config.t0s.iter().enumerate() {
            for (j, &metric) in config.estimands.iter().enumerate() {
                let cells: Vec<Outcome> = outcomes.iter().map(|o| o[k][j]).collect();
                let est: Vec<f64> = cells.iter().filter_map(|c| c.est).collect();
                let ses: Vec<f64> = cells.iter().filter_map(|c| c.se).collect();
                let cov: Vec<bool> = cells.iter().filter_map(|c| c.covered).collect();
                let failures = config.reps - est.len();
                let truth = truth_of(&truths[k], metric);
                let mean = if est.is_empty() {
                    f64::NAN
                } else {
                    est.iter().sum::<f64>() / est.len() as f64
                };
                rows.push(StudyRow {
                    setting: setting.id.number(),
                    t0,
                    metric,
                    truth,
                    est: mean,
                    bias: mean - truth,
                    ese: sd(&est),
                    ase: (!ses.is_empty()).then(|| ses.iter().sum::<f64>() / ses.len() as f64),
                    cp: (!cov.is_empty())
                        .then(|| cov.iter().filter(|&&c| c).count() as f64 / cov.len() as f64),
                    reps: config.reps,
                    failures,
                    flagged: failures as f64 > FAILURE_FLAG_FRACTION * config.reps as f64,
                });
            }
        }
        for t in truths {
            truths_out.push(TruthRow {
                setting: setting.id.number(),
                truth: t,
            });
        }
    }
    Ok(StudyTable {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        truths: truths_out,
        rows,
    })
}
