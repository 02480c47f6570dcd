//! Population truths from a large uncensored potential-outcome sample.
//!
//! Subdensities are histograms with equal-width bins on `(0, t0]`, so the
//! truths do not depend on any smoothing choice made by the estimator.

use serde::Serialize;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::trapezoid;
use crate::rmst::TimeGrid;
use crate::sim::generate::{draw_potential, PotentialOutcomeSample, SimSetting};

pub const ORACLE_BINS: usize = 2000;
/// Node spacing, as a fraction of the horizon, for the RMST truths.
pub const ORACLE_STEP_FRACTION: f64 = 0.005;
/// Allowed gap between the direct and the identity-based effect.
pub const IDENTITY_TOLERANCE: f64 = 1e-3;

/// Potential outcomes with each arm's survival times sorted, for fast
/// survival-probability lookups.
pub struct OracleSample {
    sample: PotentialOutcomeSample,
    sorted_t: [Vec<f64>; 2],
}

impl OracleSample {
    pub fn new(sample: PotentialOutcomeSample) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Argument("oracle sample is empty".into()));
        }
        let sorted_t = [0, 1].map(|a| {
            let mut v = sample.t[a].clone();
            v.sort_by(f64::total_cmp);
            v
        });
        Ok(OracleSample { sample, sorted_t })
    }

    pub fn draw(setting: &SimSetting, m: usize, seed: u64) -> Result<Self> {
        setting.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OracleSample::new(draw_potential(setting, m, &mut rng))
    }

    pub fn sample(&self) -> &PotentialOutcomeSample {
        &self.sample
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    /// `P(T_a > t)`.
    pub fn survival(&self, arm: usize, t: f64) -> f64 {
        let v = &self.sorted_t[arm];
        (v.len() - v.partition_point(|&x| x <= t)) as f64 / v.len() as f64
    }

    pub fn landmark(&self, t0: f64, bins: usize) -> Result<OracleLandmark<'_>> {
        OracleLandmark::new(self, t0, bins)
    }

    /// All truths at `(t, t0)` with RMST horizon `tau`.
    pub fn truth(&self, t: f64, t0: f64, tau: f64) -> Result<OracleTruth> {
        let lm = self.landmark(t0, ORACLE_BINS)?;
        let tr = lm.transform_at(t)?;
        let delta = tr.mu1 - tr.mu0;
        let pte = tr.delta_g_direct / delta;
        let pte_identity = tr.delta_g_identity / delta;
        if (pte - pte_identity).abs() > IDENTITY_TOLERANCE {
            return Err(Error::Consistency(format!(
                "oracle effect {pte} disagrees with identity value {pte_identity} at t0 = {t0}"
            )));
        }
        let ind = lm.primary_only(t);

        let grid = TimeGrid::new(t0, tau, ORACLE_STEP_FRACTION)?;
        let d: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&u| self.survival(1, u) - self.survival(0, u))
            .collect();
        let k = grid.early().len();
        let late = grid.late();
        let mut dg = vec![d[k - 1]];
        let mut dg_ind = vec![d[k - 1]];
        for &u in &late[1..] {
            dg.push(lm.transform_at(u)?.delta_g_direct);
            dg_ind.push(lm.primary_only(u).delta_g);
        }
        let early = trapezoid(grid.early(), &d[..k]);
        let rmst = early + trapezoid(late, &d[k - 1..]);

        Ok(OracleTruth {
            t,
            t0,
            tau,
            m: self.len(),
            delta,
            delta_g: tr.delta_g_direct,
            pte,
            pte_identity,
            lambda: tr.lambda,
            g2: tr.g2,
            pte_ind: ind.delta_g / delta,
            lambda_ind: ind.lambda,
            g2_ind: ind.g2,
            surv0_t0: lm.q[0],
            delta_rmst: rmst,
            pte_rmst: (early + trapezoid(late, &dg)) / rmst,
            pte_rmst_ind: (early + trapezoid(late, &dg_ind)) / rmst,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleTruth {
    pub t: f64,
    pub t0: f64,
    pub tau: f64,
    pub m: usize,
    pub delta: f64,
    pub delta_g: f64,
    pub pte: f64,
    /// `1 + lambda P(T0 > t0) / Delta`.
    pub pte_identity: f64,
    pub lambda: f64,
    pub g2: f64,
    pub pte_ind: f64,
    pub lambda_ind: f64,
    pub g2_ind: f64,
    pub surv0_t0: f64,
    pub delta_rmst: f64,
    pub pte_rmst: f64,
    pub pte_rmst_ind: f64,
}

/// Histogram pieces at landmark `t0` that do not depend on `t`.
pub struct OracleLandmark<'a> {
    oracle: &'a OracleSample,
    pub t0: f64,
    pub width: f64,
    /// Bin counts of `{T_a > t0, S_a <= t0}` per arm.
    pub counts: [Vec<usize>; 2],
    /// Treated subjects in that stratum: `(bin, T1)`.
    treated: Vec<(usize, f64)>,
    /// Sorted `T1` of treated subjects with `T1 > t0, S1 > t0`.
    treated_late: Vec<f64>,
    /// `P(T_a > t0, S_a > t0)`.
    pub tail: [f64; 2],
    /// `P(T_a > t0)`.
    pub q: [f64; 2],
}

impl<'a> OracleLandmark<'a> {
    fn new(oracle: &'a OracleSample, t0: f64, bins: usize) -> Result<Self> {
        if !(t0 > 0.0) || bins == 0 {
            return Err(Error::Argument(format!(
                "need t0 > 0 and bins > 0, got {t0}, {bins}"
            )));
        }
        let s = &oracle.sample;
        let m = s.len() as f64;
        let width = t0 / bins as f64;
        let bin_of = |v: f64| (((v / width).ceil() as usize).max(1) - 1).min(bins - 1);
        let mut counts = [vec![0usize; bins], vec![0usize; bins]];
        let mut tail = [0usize; 2];
        let mut treated = Vec::new();
        let mut treated_late = Vec::new();
        for a in 0..2 {
            for i in 0..s.len() {
                let (sv, tv) = (s.s[a][i], s.t[a][i]);
                if tv <= t0 {
                    continue;
                }
                if sv <= t0 {
                    let b = bin_of(sv);
                    counts[a][b] += 1;
                    if a == 1 {
                        treated.push((b, tv));
                    }
                } else {
                    tail[a] += 1;
                    if a == 1 {
                        treated_late.push(tv);
                    }
                }
            }
        }
        treated_late.sort_by(f64::total_cmp);
        if counts[1].iter().all(|&c| c == 0) || tail[1] == 0 {
            return Err(Error::EmptyStratum {
                stratum: format!("oracle arm 1 at t0 = {t0}"),
                arm0: counts[0].iter().sum(),
                arm1: counts[1].iter().sum(),
            });
        }
        Ok(OracleLandmark {
            oracle,
            t0,
            width,
            counts,
            treated,
            treated_late,
            tail: [tail[0] as f64 / m, tail[1] as f64 / m],
            q: [oracle.survival(0, t0), oracle.survival(1, t0)],
        })
    }

    /// Histogram subdensity of arm `a` at `(t0, t0)`.
    pub fn density(&self, a: usize) -> Vec<f64> {
        let scale = 1.0 / (self.oracle.len() as f64 * self.width);
        self.counts[a].iter().map(|&c| c as f64 * scale).collect()
    }

    pub fn transform_at(&self, t: f64) -> Result<OracleTransform> {
        if !(t >= self.t0) {
            return Err(Error::Argument(format!(
                "need t >= t0, got {t} < {}",
                self.t0
            )));
        }
        let m = self.oracle.len() as f64;
        let scale = 1.0 / (m * self.width);
        let bins = self.counts[0].len();
        let mut c1t = vec![0usize; bins];
        for &(b, tv) in &self.treated {
            if tv > t {
                c1t[b] += 1;
            }
        }
        let late = &self.treated_late;
        let p1t = (late.len() - late.partition_point(|&x| x <= t)) as f64 / m;
        let (p0, p1) = (self.tail[0], self.tail[1]);
        let mu0 = self.oracle.survival(0, t);
        let mu1 = self.oracle.survival(1, t);

        let (mut i_sq, mut i_t) = (0.0, 0.0);
        for b in 0..bins {
            if self.counts[1][b] > 0 {
                let f0 = self.counts[0][b] as f64 * scale;
                let f1 = self.counts[1][b] as f64 * scale;
                let f1t = c1t[b] as f64 * scale;
                i_sq += f0 * f0 / f1 * self.width;
                i_t += f0 * f1t / f1 * self.width;
            }
        }
        let lambda = (mu0 - i_t - p0 * p1t / p1) / (i_sq + p0 * p0 / p1);
        let g2 = (lambda * p0 + p1t) / p1;
        let g1: Vec<f64> = (0..bins)
            .map(|b| {
                if self.counts[1][b] > 0 {
                    (lambda * self.counts[0][b] as f64 + c1t[b] as f64) / self.counts[1][b] as f64
                } else {
                    f64::NAN
                }
            })
            .collect();

        let mut mean = [0.0; 2];
        for (a, slot) in mean.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..bins {
                if self.counts[1][b] > 0 {
                    acc += g1[b] * self.counts[a][b] as f64;
                }
            }
            *slot = acc / m + g2 * self.tail[a];
        }
        Ok(OracleTransform {
            t,
            t0: self.t0,
            width: self.width,
            lambda,
            g1,
            g2,
            mu0,
            mu1,
            delta_g_direct: mean[1] - mean[0],
            delta_g_identity: mu1 + lambda * self.q[0] - mu0,
        })
    }

    pub fn primary_only(&self, t: f64) -> OracleIndTransform {
        let (q0, q1) = (self.q[0], self.q[1]);
        let mu0 = self.oracle.survival(0, t);
        let mu1 = self.oracle.survival(1, t);
        let lambda = (mu0 - q0 * mu1 / q1) / (q0 * q0 / q1);
        let g2 = (lambda * q0 + mu1) / q1;
        OracleIndTransform {
            lambda,
            g2,
            delta_g: g2 * (q1 - q0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTransform {
    pub t: f64,
    pub t0: f64,
    pub width: f64,
    pub lambda: f64,
    /// Per bin; `NaN` where the treated stratum is empty.
    pub g1: Vec<f64>,
    pub g2: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub delta_g_direct: f64,
    pub delta_g_identity: f64,
}

impl OracleTransform {
    /// `g1` at `s`, taking the nearest populated bin for empty ones.
    pub fn g1_at(&self, s: f64) -> f64 {
        let bins = self.g1.len();
        let b = (((s / self.width).ceil() as usize).max(1) - 1).min(bins - 1);
        if !self.g1[b].is_nan() {
            return self.g1[b];
        }
        for d in 1..bins {
            for k in [b.checked_sub(d), Some(b + d)].into_iter().flatten() {
                if k < bins && !self.g1[k].is_nan() {
                    return self.g1[k];
                }
            }
        }
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleIndTransform {
    pub lambda: f64,
    pub g2: f64,
    pub delta_g: f64,
}

/// Truths for one setting at `(t, t0)`, with `tau = t` for the RMST ones.
pub fn oracle_truth(
    setting: &SimSetting,
    t: f64,
    t0: f64,
    m: usize,
    seed: u64,
) -> Result<OracleTruth> {
    OracleSample::draw(setting, m, seed)?.truth(t, t0, t)
}
