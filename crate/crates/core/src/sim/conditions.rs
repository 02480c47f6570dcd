//! Checks of four sufficient conditions under which the population
//! proportion explained lies strictly between 0 and 1.
//!
//! * C1: `m1(t | s) > m0(t | s)` for all `s`, with
//!   `m_a(t | s) = P(T > t | S = s, T > t0, S <= t0, A = a)`.
//! * C2: `M1 > M0`, with `M_a = P(T > t | T > t0, S > t0, A = a)`.
//! * C3: `P(U1 > u, T1 > t0, S1 <= t0) > P(U0 > u, T0 > t0, S0 <= t0)` for
//!   all `u`, where `U = g1(S)` under the optimal transformation.
//! * C4: `P(T1 > t0, S1 > t0) > P(T0 > t0, S0 > t0)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::weighted_quantile;
use crate::sim::generate::PotentialOutcomeSample;
use crate::sim::oracle::{OracleSample, ORACLE_BINS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub holds: bool,
    /// Smallest treated-minus-control difference; the condition holds when
    /// this is strictly positive.
    pub margin: f64,
}

impl ConditionCheck {
    fn from_margin(margin: f64) -> Self {
        ConditionCheck {
            holds: margin > 0.0,
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub t: f64,
    pub t0: f64,
    pub c1: ConditionCheck,
    pub c2: ConditionCheck,
    pub c3: ConditionCheck,
    pub c4: ConditionCheck,
    /// Centres of the surrogate-time bins used for C1.
    pub s_grid: Vec<f64>,
    pub u_grid: Vec<f64>,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.c1.holds && self.c2.holds && self.c3.holds && self.c4.holds
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionOptions {
    /// Bins on `(0, t0]` for the conditional survival in C1.
    pub s_bins: usize,
    /// Bins with fewer subjects than this in either arm are skipped in C1.
    pub min_count: usize,
    /// Number of interior quantiles of `U` used for C3.
    pub u_points: usize,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            s_bins: 40,
            min_count: 200,
            u_points: 99,
        }
    }
}

pub fn check_conditions(
    sample: &PotentialOutcomeSample,
    t: f64,
    t0: f64,
) -> Result<ConditionReport> {
    check_conditions_with(sample, t, t0, &ConditionOptions::default())
}

pub fn check_conditions_with(
    sample: &PotentialOutcomeSample,
    t: f64,
    t0: f64,
    opts: &ConditionOptions,
) -> Result<ConditionReport> {
    if !(t0 > 0.0 && t >= t0) {
        return Err(Error::Argument(format!(
            "need t >= t0 > 0, got t = {t}, t0 = {t0}"
        )));
    }
    let n = sample.len();
    let m = n as f64;

    // C1 on coarse bins.
    let width = t0 / opts.s_bins as f64;
    let bin_of = |v: f64| (((v / width).ceil() as usize).max(1) - 1).min(opts.s_bins - 1);
    let mut at_risk = [vec![0usize; opts.s_bins], vec![0usize; opts.s_bins]];
    let mut alive = [vec![0usize; opts.s_bins], vec![0usize; opts.s_bins]];
    let mut late = [0usize; 2];
    let mut late_alive = [0usize; 2];
    for a in 0..2 {
        for i in 0..n {
            let (s, tv) = (sample.s[a][i], sample.t[a][i]);
            if tv <= t0 {
                continue;
            }
            if s <= t0 {
                let b = bin_of(s);
                at_risk[a][b] += 1;
                if tv > t {
                    alive[a][b] += 1;
                }
            } else {
                late[a] += 1;
                if tv > t {
                    late_alive[a] += 1;
                }
            }
        }
    }
    for a in 0..2 {
        if at_risk[a].iter().all(|&c| c == 0) || late[a] == 0 {
            return Err(Error::EmptyStratum {
                stratum: format!("arm {a} at t0 = {t0}"),
                arm0: at_risk[0].iter().sum(),
                arm1: at_risk[1].iter().sum(),
            });
        }
    }
    let mut s_grid = Vec::new();
    let mut c1 = f64::INFINITY;
    for b in 0..opts.s_bins {
        if at_risk[0][b] >= opts.min_count && at_risk[1][b] >= opts.min_count {
            s_grid.push((b as f64 + 0.5) * width);
            let m1 = alive[1][b] as f64 / at_risk[1][b] as f64;
            let m0 = alive[0][b] as f64 / at_risk[0][b] as f64;
            c1 = c1.min(m1 - m0);
        }
    }
    if s_grid.is_empty() {
        return Err(Error::EmptyStratum {
            stratum: format!(
                "no surrogate-time bin with {} subjects in both arms",
                opts.min_count
            ),
            arm0: at_risk[0].iter().sum(),
            arm1: at_risk[1].iter().sum(),
        });
    }

    let c2 = late_alive[1] as f64 / late[1] as f64 - late_alive[0] as f64 / late[0] as f64;
    let c4 = (late[1] as f64 - late[0] as f64) / m;

    // C3 with the oracle transformation on the same sample.
    let oracle = OracleSample::new(sample.clone())?;
    let tr = oracle.landmark(t0, ORACLE_BINS)?.transform_at(t)?;
    let mut u = [Vec::new(), Vec::new()];
    for (a, ua) in u.iter_mut().enumerate() {
        for i in 0..n {
            if sample.t[a][i] > t0 && sample.s[a][i] <= t0 {
                ua.push(tr.g1_at(sample.s[a][i]));
            }
        }
        ua.sort_by(f64::total_cmp);
    }
    let pooled: Vec<f64> = u[0].iter().chain(&u[1]).copied().collect();
    let w = vec![1.0; pooled.len()];
    let u_grid: Vec<f64> = (1..=opts.u_points)
        .map(|k| weighted_quantile(&pooled, &w, k as f64 / (opts.u_points + 1) as f64))
        .collect();
    let above = |v: &[f64], x: f64| (v.len() - v.partition_point(|&y| y <= x)) as f64 / m;
    let c3 = u_grid
        .iter()
        .map(|&x| above(&u[1], x) - above(&u[0], x))
        .fold(f64::INFINITY, f64::min);

    Ok(ConditionReport {
        t,
        t0,
        c1: ConditionCheck::from_margin(c1),
        c2: ConditionCheck::from_margin(c2),
        c3: ConditionCheck::from_margin(c3),
        c4: ConditionCheck::from_margin(c4),
        s_grid,
        u_grid,
    })
}
