//! Perturbation resampling.
//!
//! Each replicate draws one positive unit-mean multiplier per subject and
//! recomputes everything, including the censoring curves, with the
//! perturbed weights. The replicate standard deviation is the standard error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrialDataset;
use crate::error::{Error, Result};
use crate::kernel::weighted_quantile;
use crate::pte::{full_estimate, ind_estimate, Analysis, EstimateOptions, Orientation};
use crate::rmst::{rmst_effect, rmst_result, TimeGrid};

pub const DEFAULT_REPLICATES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiplierLaw {
    /// Standard exponential.
    Exponential,
    /// Gamma with the given shape and mean 1.
    Gamma { shape: f64 },
    /// Always 1; every replicate reproduces the point estimate.
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiMethod {
    /// Point estimate plus or minus 1.96 standard errors.
    Normal,
    /// 2.5% and 97.5% replicate quantiles.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub replicates: usize,
    pub seed: u64,
    pub law: MultiplierLaw,
    pub ci: CiMethod,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            replicates: DEFAULT_REPLICATES,
            seed: 1,
            law: MultiplierLaw::Exponential,
            ci: CiMethod::Normal,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Argument(
                "at least 2 perturbation replicates are needed".into(),
            ));
        }
        if let MultiplierLaw::Gamma { shape } = self.law {
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(Error::Argument(format!(
                    "gamma shape must be positive, got {shape}"
                )));
            }
        }
        Ok(())
    }

    /// Multipliers for replicate `b`. Each replicate has its own stream, so
    /// the draws do not depend on scheduling.
    pub fn multipliers(&self, b: usize, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(b as u64);
        match self.law {
            MultiplierLaw::Exponential => (0..n).map(|_| Exp1.sample(&mut rng)).collect(),
            MultiplierLaw::Gamma { shape } => {
                let g = Gamma::new(shape, 1.0 / shape).expect("validated shape");
                (0..n).map(|_| g.sample(&mut rng)).collect()
            }
            MultiplierLaw::Unit => vec![1.0; n],
        }
    }
}

/// Which estimate a replicate recomputes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Pte,
    PteInd,
    /// `g2`, the transformed value for subjects alive without the surrogate.
    G2,
    PteRmst,
    PteRmstInd,
}

impl Estimand {
    pub const ALL: [Estimand; 5] = [
        Estimand::Pte,
        Estimand::PteInd,
        Estimand::G2,
        Estimand::PteRmst,
        Estimand::PteRmstInd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimand::Pte => "PTE",
            Estimand::PteInd => "PTE_Ind",
            Estimand::G2 => "g2",
            Estimand::PteRmst => "PTE_rmst",
            Estimand::PteRmstInd => "PTE_rmst_Ind",
        }
    }

    pub fn is_rmst(self) -> bool {
        matches!(self, Estimand::PteRmst | Estimand::PteRmstInd)
    }
}

/// Everything needed to evaluate an estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub t: f64,
    pub t0: f64,
    /// RMST horizon; defaults to `t`.
    pub tau: Option<f64>,
    pub opts: EstimateOptions,
    pub step_fraction: f64,
}

impl EstimatorParams {
    pub fn new(t: f64, t0: f64) -> Self {
        EstimatorParams {
            t,
            t0,
            tau: None,
            opts: EstimateOptions::default(),
            step_fraction: crate::rmst::DEFAULT_STEP_FRACTION,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalEstimate {
    pub estimand: Estimand,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub replicates: usize,
    pub failures: usize,
    pub labels_swapped: bool,
}

/// Evaluates the requested estimands on one copy of the data. Orientation
/// is decided per group: the survival difference at `t` for the landmark
/// quantities and the RMST difference for the RMST ones, unless fixed in
/// `orientation`.
fn evaluate(
    data: &TrialDataset,
    which: &[Estimand],
    params: &EstimatorParams,
    perturb: Option<&[f64]>,
    orientation: [Orientation; 2],
) -> Vec<Result<(f64, bool)>> {
    let mut out: Vec<Option<Result<(f64, bool)>>> = (0..which.len()).map(|_| None).collect();
    let (t, t0) = (params.t, params.t0);

    if which.iter().any(|e| !e.is_rmst()) {
        let opts = EstimateOptions {
            orientation: orientation[0],
            ..params.opts
        };
        match Analysis::orient(data, &opts, perturb, |a| a.delta(t)) {
            Err(e) => {
                for (k, e2) in which.iter().enumerate() {
                    if !e2.is_rmst() {
                        out[k] = Some(Err(clone_err(&e)));
                    }
                }
            }
            Ok(analysis) => {
                let swapped = analysis.labels_swapped();
                let full = if which
                    .iter()
                    .any(|e| matches!(e, Estimand::Pte | Estimand::G2))
                {
                    Some(full_estimate(&analysis, t, t0))
                } else {
                    None
                };
                for (k, e) in which.iter().enumerate() {
                    let v = match e {
                        Estimand::Pte => match full.as_ref().unwrap() {
                            Ok((r, _)) => Ok((r.pte, swapped)),
                            Err(err) => Err(clone_err(err)),
                        },
                        Estimand::G2 => match full.as_ref().unwrap() {
                            Ok((_, tr)) => Ok((tr.g2, swapped)),
                            Err(err) => Err(clone_err(err)),
                        },
                        Estimand::PteInd => {
                            ind_estimate(&analysis, t, t0).map(|r| (r.pte, swapped))
                        }
                        _ => continue,
                    };
                    out[k] = Some(v);
                }
            }
        }
    }

    if which.iter().any(|e| e.is_rmst()) {
        let opts = EstimateOptions {
            orientation: orientation[1],
            ..params.opts
        };
        let tau = params.tau();
        let analysis = TimeGrid::new(t0, tau, params.step_fraction).and_then(|grid| {
            Analysis::orient(data, &opts, perturb, |a| rmst_effect(a, &grid)).map(|a| (a, grid))
        });
        for (k, e) in which.iter().enumerate() {
            if !e.is_rmst() {
                continue;
            }
            out[k] = Some(match &analysis {
                Err(err) => Err(clone_err(err)),
                Ok((a, grid)) => rmst_result(a, grid, *e == Estimand::PteRmst, tau)
                    .map(|(r, _)| (r.pte, a.labels_swapped())),
            });
        }
    }
    out.into_iter()
        .map(|v| v.expect("every estimand evaluated"))
        .collect()
}

/// Errors are not `Clone` because of the I/O variant; replicates only need
/// the message and classification.
fn clone_err(e: &Error) -> Error {
    match e {
        Error::IllDefinedPte { delta } => Error::IllDefinedPte { delta: *delta },
        Error::DegenerateArm { arm } => Error::DegenerateArm { arm: *arm },
        Error::EmptyStratum {
            stratum,
            arm0,
            arm1,
        } => Error::EmptyStratum {
            stratum: stratum.clone(),
            arm0: *arm0,
            arm1: *arm1,
        },
        Error::Argument(m) => Error::Argument(m.clone()),
        Error::Validation(m) => Error::Validation(m.clone()),
        Error::DegenerateSample(m) => Error::DegenerateSample(m.clone()),
        Error::Positivity { id, time, value } => Error::Positivity {
            id: id.clone(),
            time: *time,
            value: *value,
        },
        Error::Node { t, source } => Error::Node {
            t: *t,
            source: Box::new(clone_err(source)),
        },
        other => Error::Consistency(other.to_string()),
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)).sqrt()
}

/// Point estimates with perturbation standard errors for several estimands
/// at once, one result per estimand. One set of multipliers per replicate is
/// shared by all of them.
///
/// A failed point estimate is returned as is. If more than a tenth of the
/// replicates fail, that estimand gets [`Error::UnreliableInference`].
pub fn perturbed_each(
    data: &TrialDataset,
    which: &[Estimand],
    params: &EstimatorParams,
    config: &PerturbationConfig,
) -> Result<Vec<Result<IntervalEstimate>>> {
    config.validate()?;
    let points = evaluate(data, which, params, None, [params.opts.orientation; 2]);
    let fixed = |rmst: bool| {
        let swapped = which
            .iter()
            .zip(&points)
            .find(|(e, p)| e.is_rmst() == rmst && p.is_ok())
            .map(|(_, p)| p.as_ref().unwrap().1)
            .unwrap_or(false);
        if swapped {
            Orientation::Swapped
        } else {
            Orientation::AsGiven
        }
    };
    let orientation = [fixed(false), fixed(true)];
    let active: Vec<Estimand> = which
        .iter()
        .zip(&points)
        .filter(|(_, p)| p.is_ok())
        .map(|(e, _)| *e)
        .collect();

    let n = data.len();
    let reps: Vec<Vec<Option<f64>>> = if active.is_empty() {
        Vec::new()
    } else {
        (0..config.replicates)
            .into_par_iter()
            .map(|b| {
                let m = config.multipliers(b, n);
                evaluate(data, &active, params, Some(&m), orientation)
                    .into_iter()
                    .map(|r| r.ok().map(|v| v.0).filter(|v| v.is_finite()))
                    .collect()
            })
            .collect()
    };

    let mut slot = 0;
    let out = which
        .iter()
        .zip(points)
        .map(|(&estimand, point)| {
            let (point, labels_swapped) = point?;
            let k = slot;
            slot += 1;
            let values: Vec<f64> = reps.iter().filter_map(|r| r[k]).collect();
            let failures = config.replicates - values.len();
            if failures * 10 > config.replicates || values.len() < 2 {
                return Err(Error::UnreliableInference {
                    failures,
                    replicates: config.replicates,
                    partial: values,
                });
            }
            let se = sample_sd(&values);
            let ci = match config.ci {
                CiMethod::Normal => (point - 1.96 * se, point + 1.96 * se),
                CiMethod::Quantile => {
                    let w = vec![1.0; values.len()];
                    (
                        weighted_quantile(&values, &w, 0.025),
                        weighted_quantile(&values, &w, 0.975),
                    )
                }
            };
            Ok(IntervalEstimate {
                estimand,
                point,
                se,
                ci,
                replicates: config.replicates,
                failures,
                labels_swapped,
            })
        })
        .collect();
    Ok(out)
}

/// Like [`perturbed_each`] but fails on the first estimand that fails.
pub fn perturbed_bundle(
    data: &TrialDataset,
    which: &[Estimand],
    params: &EstimatorParams,
    config: &PerturbationConfig,
) -> Result<Vec<IntervalEstimate>> {
    perturbed_each(data, which, params, config)?
        .into_iter()
        .collect()
}

/// Point estimates only, one result per estimand.
pub fn point_each(
    data: &TrialDataset,
    which: &[Estimand],
    params: &EstimatorParams,
) -> Vec<Result<f64>> {
    evaluate(data, which, params, None, [params.opts.orientation; 2])
        .into_iter()
        .map(|r| r.map(|v| v.0))
        .collect()
}

/// Perturbation interval for a single estimand.
pub fn perturbed_estimate(
    data: &TrialDataset,
    estimand: Estimand,
    params: &EstimatorParams,
    config: &PerturbationConfig,
) -> Result<IntervalEstimate> {
    Ok(perturbed_bundle(data, &[estimand], params, config)?.remove(0))
}

/// Raw replicate values, in replicate order, for diagnostics and tests.
pub fn replicate_values(
    data: &TrialDataset,
    estimand: Estimand,
    params: &EstimatorParams,
    config: &PerturbationConfig,
    orientation: Orientation,
) -> Vec<Option<f64>> {
    (0..config.replicates)
        .into_par_iter()
        .map(|b| {
            let m = config.multipliers(b, data.len());
            evaluate(data, &[estimand], params, Some(&m), [orientation; 2])
                .remove(0)
                .ok()
                .map(|v| v.0)
        })
        .collect()
}
