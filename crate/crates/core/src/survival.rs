//! Kaplan-Meier curves, inverse probability of censoring weights and the
//! weighted tail probabilities built from them.
//!
//! All weighted quantities accept optional per-subject perturbation
//! multipliers. A multiplier scales the subject's contribution to every sum,
//! including the risk sets of the censoring curve.

use serde::Serialize;

use crate::data::{Arm, TrialDataset};
use crate::error::{Error, Result};

/// Censoring survival below this value is treated as zero when a subject
/// with a nonzero weight numerator needs it.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

/// Right-continuous step function starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSurvivalCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalCurve {
    /// The curve that never drops.
    pub fn constant_one() -> Self {
        StepSurvivalCurve {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    fn from_steps(times: Vec<f64>, values: Vec<f64>) -> Self {
        let curve = StepSurvivalCurve { times, values };
        assert!(
            curve.is_valid(),
            "product-limit curve left [0, 1] or increased"
        );
        curve
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at `t`, including any jump located exactly at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Monotone non-increasing with every value in `[0, 1]`.
    pub fn is_valid(&self) -> bool {
        let mut prev = 1.0;
        self.times.windows(2).all(|w| w[0] < w[1])
            && self.values.iter().all(|&v| {
                let ok = (0.0..=prev).contains(&v);
                prev = v;
                ok
            })
    }
}

/// Weighted product-limit estimator. At tied times every subject with
/// `time >= u` is at risk, so events at `u` are removed from the risk set
/// only after the drop at `u` is applied.
pub fn product_limit(times: &[f64], events: &[bool], weights: &[f64]) -> StepSurvivalCurve {
    let n = times.len();
    debug_assert_eq!(events.len(), n);
    debug_assert_eq!(weights.len(), n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    let mut at_risk: f64 = weights.iter().sum();
    let mut surv = 1.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < n {
        let u = times[order[i]];
        let mut d = 0.0;
        let mut leaving = 0.0;
        while i < n && times[order[i]] == u {
            let j = order[i];
            if events[j] {
                d += weights[j];
            }
            leaving += weights[j];
            i += 1;
        }
        if d > 0.0 && at_risk > 0.0 {
            surv *= (1.0 - d / at_risk).max(0.0);
            jump_times.push(u);
            values.push(surv);
        }
        at_risk -= leaving;
    }
    StepSurvivalCurve::from_steps(jump_times, values)
}

/// Kaplan-Meier estimate of the censoring survival `P(C > u | A = arm)`,
/// treating `1 - delta` as the event indicator.
pub fn censoring_km(
    data: &TrialDataset,
    arm: Arm,
    perturb: Option<&[f64]>,
) -> Result<StepSurvivalCurve> {
    check_multipliers(data, perturb)?;
    let mut times = Vec::with_capacity(data.count(arm));
    let mut events = Vec::with_capacity(data.count(arm));
    let mut weights = Vec::with_capacity(data.count(arm));
    for (i, r) in data.records().iter().enumerate() {
        if r.arm == arm {
            times.push(r.x);
            events.push(!r.delta);
            weights.push(perturb.map_or(1.0, |v| v[i]));
        }
    }
    if times.is_empty() {
        return Err(Error::Validation(format!("arm {arm} empty")));
    }
    Ok(product_limit(&times, &events, &weights))
}

fn check_multipliers(data: &TrialDataset, perturb: Option<&[f64]>) -> Result<()> {
    if let Some(v) = perturb {
        if v.len() != data.len() {
            return Err(Error::Argument(format!(
                "{} multipliers for {} subjects",
                v.len(),
                data.len()
            )));
        }
        if let Some(bad) = v.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::Argument(format!("invalid multiplier {bad}")));
        }
    }
    Ok(())
}

/// Censoring curves for both arms, fitted with the same multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringCurves {
    pub curves: [StepSurvivalCurve; 2],
}

impl CensoringCurves {
    pub fn fit(data: &TrialDataset, perturb: Option<&[f64]>) -> Result<Self> {
        Ok(CensoringCurves {
            curves: [
                censoring_km(data, Arm::Control, perturb)?,
                censoring_km(data, Arm::Treated, perturb)?,
            ],
        })
    }

    pub fn arm(&self, arm: Arm) -> &StepSurvivalCurve {
        &self.curves[arm.index()]
    }
}

/// IPCW weights for target time `t`, aligned with the dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub t: f64,
    /// Unperturbed weights `{I(X<=t) delta + I(X>t)} / G(X ^ t)`.
    pub base: Vec<f64>,
    pub multipliers: Option<Vec<f64>>,
    /// `multiplier * base`, the value every weighted sum uses.
    pub effective: Vec<f64>,
    arm_totals: [f64; 2],
}

impl WeightVector {
    pub fn arm_total(&self, arm: Arm) -> f64 {
        self.arm_totals[arm.index()]
    }

    /// Weighted mean of `value(i)` over the subjects of `arm`.
    pub fn arm_mean(
        &self,
        data: &TrialDataset,
        arm: Arm,
        mut value: impl FnMut(usize) -> f64,
    ) -> Result<f64> {
        let total = self.arm_total(arm);
        if !(total > 0.0) {
            return Err(Error::DegenerateArm { arm });
        }
        let mut acc = 0.0;
        for (i, r) in data.records().iter().enumerate() {
            if r.arm == arm && self.effective[i] != 0.0 {
                acc += self.effective[i] * value(i);
            }
        }
        Ok(acc / total)
    }
}

pub fn ipcw_weights(
    data: &TrialDataset,
    t: f64,
    curves: &CensoringCurves,
    perturb: Option<&[f64]>,
) -> Result<WeightVector> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Argument(format!(
            "target time must be positive, got {t}"
        )));
    }
    check_multipliers(data, perturb)?;
    let n = data.len();
    let mut base = Vec::with_capacity(n);
    let mut effective = Vec::with_capacity(n);
    let mut arm_totals = [0.0; 2];
    for (i, r) in data.records().iter().enumerate() {
        let numerator = if r.x <= t {
            if r.delta {
                1.0
            } else {
                0.0
            }
        } else {
            1.0
        };
        let w = if numerator == 0.0 {
            0.0
        } else {
            let at = r.x.min(t);
            let g = curves.arm(r.arm).eval(at);
            if g < POSITIVITY_FLOOR {
                return Err(Error::Positivity {
                    id: r.id.clone(),
                    time: at,
                    value: g,
                });
            }
            numerator / g
        };
        let e = perturb.map_or(w, |v| v[i] * w);
        base.push(w);
        effective.push(e);
        arm_totals[r.arm.index()] += e;
    }
    Ok(WeightVector {
        t,
        base,
        multipliers: perturb.map(|v| v.to_vec()),
        effective,
        arm_totals,
    })
}

fn check_target(weights: &WeightVector, t: f64) -> Result<()> {
    if weights.t != t {
        return Err(Error::Argument(format!(
            "weights were built for t = {}, requested t = {t}",
            weights.t
        )));
    }
    Ok(())
}

/// IPCW estimate of `P(T > t | A = arm)`.
pub fn weighted_survival(
    data: &TrialDataset,
    arm: Arm,
    t: f64,
    weights: &WeightVector,
) -> Result<f64> {
    check_target(weights, t)?;
    let recs = data.records();
    weights.arm_mean(data, arm, |i| if recs[i].x > t { 1.0 } else { 0.0 })
}

/// IPCW estimate of `P(T > t, S > t0 | A = arm)`, where `S > t0` means the
/// surrogate was not observed by `t0`.
pub fn weighted_joint_tail(
    data: &TrialDataset,
    arm: Arm,
    t: f64,
    t0: f64,
    weights: &WeightVector,
) -> Result<f64> {
    if !(t0 > 0.0 && t >= t0) {
        return Err(Error::Argument(format!(
            "need t >= t0 > 0, got t = {t}, t0 = {t0}"
        )));
    }
    check_target(weights, t)?;
    let recs = data.records();
    weights.arm_mean(data, arm, |i| {
        let r = &recs[i];
        if r.x > t && r.surrogate_after(t0) {
            1.0
        } else {
            0.0
        }
    })
}

/// One point of a Kaplan-Meier curve with a Greenwood pointwise interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmPoint {
    pub time: f64,
    pub survival: f64,
    pub lower: f64,
    pub upper: f64,
    pub n_risk: usize,
    pub n_event: usize,
}

/// Unweighted Kaplan-Meier curve of `times` with a 95% pointwise interval
/// from Greenwood's variance on the survival scale, clipped to `[0, 1]`.
/// The first point is `(0, 1)`.
pub fn kaplan_meier_greenwood(times: &[f64], events: &[bool]) -> Vec<KmPoint> {
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut points = vec![KmPoint {
        time: 0.0,
        survival: 1.0,
        lower: 1.0,
        upper: 1.0,
        n_risk: n,
        n_event: 0,
    }];
    let mut at_risk = n;
    let mut surv = 1.0;
    let mut greenwood = 0.0;
    let mut i = 0;
    while i < n {
        let u = times[order[i]];
        let mut d = 0;
        let mut leaving = 0;
        while i < n && times[order[i]] == u {
            if events[order[i]] {
                d += 1;
            }
            leaving += 1;
            i += 1;
        }
        if d > 0 {
            let (nr, de) = (at_risk as f64, d as f64);
            surv *= 1.0 - de / nr;
            if nr > de {
                greenwood += de / (nr * (nr - de));
            }
            let se = surv * greenwood.sqrt();
            points.push(KmPoint {
                time: u,
                survival: surv,
                lower: (surv - 1.959_963_984_540_054 * se).max(0.0),
                upper: (surv + 1.959_963_984_540_054 * se).min(1.0),
                n_risk: at_risk,
                n_event: d,
            });
        }
        at_risk -= leaving;
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;

    fn dataset(rows: &[(u8, f64, bool, Option<f64>)]) -> TrialDataset {
        let recs = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, x, d, s))| {
                SubjectRecord::new(format!("{i}"), Arm::from_label(a).unwrap(), x, d, s)
            })
            .collect();
        TrialDataset::new(recs).unwrap()
    }

    #[test]
    fn no_censoring_gives_flat_curve() {
        let d = dataset(&[
            (1, 1.0, true, None),
            (1, 2.0, true, None),
            (0, 3.0, true, None),
        ]);
        let c = censoring_km(&d, Arm::Treated, None).unwrap();
        assert!(c.jump_times().is_empty());
        assert_eq!(c.eval(10.0), 1.0);
    }

    #[test]
    fn hand_product_limit() {
        // Censorings at 1 (3 at risk) and 3 (1 at risk), death at 2.
        let d = dataset(&[
            (1, 1.0, false, None),
            (1, 2.0, true, None),
            (1, 3.0, false, None),
            (0, 1.0, true, None),
        ]);
        let c = censoring_km(&d, Arm::Treated, None).unwrap();
        assert_eq!(c.eval(0.5), 1.0);
        assert!((c.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.eval(2.9) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.eval(3.0), 0.0);
        assert_eq!(c.eval(7.0), 0.0);
    }

    #[test]
    fn tied_death_stays_in_censoring_risk_set() {
        // At u = 2 one censoring and one death are tied: 2 at risk, drop 1/2.
        let d = dataset(&[
            (1, 2.0, false, None),
            (1, 2.0, true, None),
            (1, 5.0, true, None),
            (0, 1.0, true, None),
        ]);
        let c = censoring_km(&d, Arm::Treated, None).unwrap();
        assert!((c.eval(2.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_censoring_time_keeps_one_before_it() {
        let d = dataset(&[
            (1, 1.0, true, None),
            (1, 2.0, true, None),
            (1, 4.0, false, None),
            (1, 6.0, true, None),
            (0, 1.0, true, None),
        ]);
        let c = censoring_km(&d, Arm::Treated, None).unwrap();
        assert_eq!(c.eval(3.999), 1.0);
        assert!((c.eval(4.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unit_multipliers_are_bit_identical() {
        let d = dataset(&[
            (1, 1.0, false, None),
            (1, 2.5, true, Some(1.0)),
            (1, 3.0, false, None),
            (0, 1.5, true, None),
            (0, 4.0, false, Some(2.0)),
            (0, 6.0, true, None),
        ]);
        let ones = vec![1.0; d.len()];
        let a = CensoringCurves::fit(&d, None).unwrap();
        let b = CensoringCurves::fit(&d, Some(&ones)).unwrap();
        assert_eq!(a, b);
        let wa = ipcw_weights(&d, 3.5, &a, None).unwrap();
        let wb = ipcw_weights(&d, 3.5, &b, Some(&ones)).unwrap();
        assert_eq!(wa.effective, wb.effective);
        for arm in Arm::BOTH {
            assert_eq!(
                weighted_survival(&d, arm, 3.5, &wa).unwrap().to_bits(),
                weighted_survival(&d, arm, 3.5, &wb).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn weight_formula_cases() {
        // Treated arm: censored at 2 (before t) and at 7 (after t); the curve
        // is 1 before 2 and 2/3 on [2, 7).
        let d = dataset(&[
            (1, 2.0, false, None),
            (1, 7.0, false, None),
            (1, 9.0, true, None),
            (0, 3.0, true, None),
        ]);
        let curves = CensoringCurves::fit(&d, None).unwrap();
        let g = curves.arm(Arm::Treated);
        assert!((g.eval(5.0) - 2.0 / 3.0).abs() < 1e-15);
        let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
        assert_eq!(w.base[0], 0.0);
        assert!((w.base[1] - 1.5).abs() < 1e-15);
        assert!((w.base[2] - 1.5).abs() < 1e-15);
        assert_eq!(w.base[3], 1.0);
    }

    #[test]
    fn weights_without_censoring_are_indicators() {
        let d = dataset(&[
            (1, 1.0, true, None),
            (1, 6.0, true, None),
            (1, 8.0, true, None),
            (0, 2.0, true, None),
        ]);
        let curves = CensoringCurves::fit(&d, None).unwrap();
        let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
        assert_eq!(w.base, vec![1.0, 1.0, 1.0, 1.0]);
        let mu = weighted_survival(&d, Arm::Treated, 5.0, &w).unwrap();
        assert_eq!(mu, 2.0 / 3.0);
    }

    #[test]
    fn joint_tail_counts() {
        let d = dataset(&[
            (1, 5.0, true, Some(1.0)),
            (1, 6.0, true, None),
            (1, 7.0, false, Some(4.0)),
            (1, 1.0, true, None),
            (0, 2.0, true, None),
        ]);
        let curves = CensoringCurves::fit(&d, None).unwrap();
        let w = ipcw_weights(&d, 3.0, &curves, None).unwrap();
        let p = weighted_joint_tail(&d, Arm::Treated, 3.0, 3.0, &w).unwrap();
        assert_eq!(p, 0.5);
        let all_early = dataset(&[
            (1, 5.0, true, Some(1.0)),
            (1, 6.0, true, Some(2.0)),
            (0, 2.0, true, None),
        ]);
        let curves = CensoringCurves::fit(&all_early, None).unwrap();
        let w = ipcw_weights(&all_early, 4.0, &curves, None).unwrap();
        assert_eq!(
            weighted_joint_tail(&all_early, Arm::Treated, 4.0, 3.0, &w).unwrap(),
            0.0
        );
    }

    #[test]
    fn survival_at_zero_is_one() {
        let d = dataset(&[
            (1, 1.0, false, None),
            (1, 6.0, true, None),
            (0, 2.0, true, None),
        ]);
        let curves = CensoringCurves::fit(&d, None).unwrap();
        let w = ipcw_weights(&d, 1e-9, &curves, None).unwrap();
        assert_eq!(weighted_survival(&d, Arm::Treated, 1e-9, &w).unwrap(), 1.0);
    }

    #[test]
    fn positivity_failure_names_subject() {
        // Treated arm: everyone still at risk at 3 is censored there, so the
        // curve is 0 from 3 on and subject "2" (x = 4 > t) would need it.
        let d = TrialDataset::new(vec![
            SubjectRecord::new("1", Arm::Treated, 3.0, false, None),
            SubjectRecord::new("0", Arm::Control, 3.0, true, None),
        ])
        .unwrap();
        let curves = CensoringCurves::fit(&d, None).unwrap();
        assert_eq!(curves.arm(Arm::Treated).eval(3.0), 0.0);
        let d2 = TrialDataset::new(vec![
            SubjectRecord::new("1", Arm::Treated, 3.0, false, None),
            SubjectRecord::new("2", Arm::Treated, 4.0, true, None),
            SubjectRecord::new("0", Arm::Control, 3.0, true, None),
        ])
        .unwrap();
        let mut c2 = CensoringCurves::fit(&d2, None).unwrap();
        c2.curves[1] = curves.curves[1].clone();
        match ipcw_weights(&d2, 5.0, &c2, None) {
            Err(Error::Positivity { id, .. }) => assert_eq!(id, "2"),
            other => panic!("expected positivity error, got {other:?}"),
        }
    }

    #[test]
    fn greenwood_matches_hand_values() {
        let pts = kaplan_meier_greenwood(&[1.0, 2.0, 3.0, 4.0], &[true, false, true, true]);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[1].survival, 0.75);
        let s = 0.75 * 0.5;
        assert!((pts[2].survival - s).abs() < 1e-15);
        let var = s * s * (1.0 / (4.0 * 3.0) + 1.0 / (2.0 * 1.0));
        assert!((pts[2].lower - (s - 1.959963984540054 * var.sqrt()).max(0.0)).abs() < 1e-12);
        assert_eq!(pts[3].survival, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn km_is_monotone_and_bounded(
                rows in proptest::collection::vec((0.1f64..10.0, any::<bool>(), 0.2f64..3.0), 1..60)
            ) {
                let times: Vec<f64> = rows.iter().map(|r| (r.0 * 4.0).round() / 4.0).collect();
                let events: Vec<bool> = rows.iter().map(|r| r.1).collect();
                let weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
                let c = product_limit(&times, &events, &weights);
                prop_assert!(c.is_valid());
                let ones = vec![1.0; times.len()];
                prop_assert!(product_limit(&times, &events, &ones).is_valid());
            }
        }
    }
}
