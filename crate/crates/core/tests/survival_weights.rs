use surropt_core::data::{Arm, SubjectRecord, TrialDataset};
use surropt_core::sim::generate::{generate_setting, SettingId, SimSetting};
use surropt_core::sim::oracle::OracleSample;
use surropt_core::survival::{
    ipcw_weights, kaplan_meier_greenwood, product_limit, weighted_joint_tail, weighted_survival,
    CensoringCurves,
};

fn uncensored(x: &[f64]) -> TrialDataset {
    let mut recs: Vec<SubjectRecord> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| SubjectRecord::new(format!("t{i}"), Arm::Treated, v, true, None))
        .collect();
    recs.push(SubjectRecord::new("c", Arm::Control, 1.0, true, None));
    TrialDataset::new(recs).unwrap()
}

#[test]
fn hand_product_limit() {
    // Censorings at 1 and 3, a death at 2.
    let g = product_limit(&[1.0, 2.0, 3.0], &[true, false, true], &[1.0; 3]);
    assert_eq!(g.eval(0.5), 1.0);
    assert!((g.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
    assert!((g.eval(2.9) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(g.eval(3.0), 0.0);
}

#[test]
fn empirical_survival_without_censoring() {
    let d = uncensored(&[1.0, 6.0, 8.0]);
    let curves = CensoringCurves::fit(&d, None).unwrap();
    let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
    assert_eq!(
        weighted_survival(&d, Arm::Treated, 5.0, &w).unwrap(),
        2.0 / 3.0
    );
    assert!(w.effective.iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn joint_tail_with_all_surrogates_early_is_zero() {
    let recs = vec![
        SubjectRecord::new("1", Arm::Treated, 6.0, true, Some(1.0)),
        SubjectRecord::new("2", Arm::Treated, 7.0, false, Some(0.5)),
        SubjectRecord::new("3", Arm::Control, 4.0, true, Some(2.0)),
    ];
    let d = TrialDataset::new(recs).unwrap();
    let curves = CensoringCurves::fit(&d, None).unwrap();
    let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
    assert_eq!(
        weighted_joint_tail(&d, Arm::Treated, 5.0, 2.0, &w).unwrap(),
        0.0
    );
}

#[test]
fn ipcw_survival_matches_oracle() {
    let setting = SimSetting::new(SettingId::One);
    let (_, d) = generate_setting(&setting, 200_000, 21).unwrap();
    let oracle = OracleSample::draw(&setting, 1_000_000, 22).unwrap();
    let curves = CensoringCurves::fit(&d, None).unwrap();
    let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
    let est = weighted_survival(&d, Arm::Control, 5.0, &w).unwrap();
    let truth = oracle.survival(0, 5.0);
    assert!((est - truth).abs() < 0.01, "{est} vs {truth}");
}

#[test]
fn ipcw_joint_tail_matches_oracle() {
    let setting = SimSetting::new(SettingId::Two);
    let (_, d) = generate_setting(&setting, 200_000, 23).unwrap();
    let oracle = OracleSample::draw(&setting, 1_000_000, 24).unwrap();
    let curves = CensoringCurves::fit(&d, None).unwrap();
    let w = ipcw_weights(&d, 5.0, &curves, None).unwrap();
    let est = weighted_joint_tail(&d, Arm::Treated, 5.0, 2.0, &w).unwrap();
    let s = oracle.sample();
    let truth = (0..s.len())
        .filter(|&i| s.t[1][i] > 5.0 && s.s[1][i] > 2.0)
        .count() as f64
        / s.len() as f64;
    assert!((est - truth).abs() < 0.01, "{est} vs {truth}");
}

#[test]
fn fitted_censoring_curves_are_monotone_and_bounded() {
    for id in SettingId::ALL {
        let (_, d) = generate_setting(&SimSetting::new(id), 2000, 25).unwrap();
        let curves = CensoringCurves::fit(&d, None).unwrap();
        for arm in Arm::BOTH {
            let g = curves.arm(arm);
            assert!(g.is_valid());
            assert!(g.values().windows(2).all(|w| w[1] <= w[0]));
            assert!(g.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let x: Vec<f64> = d.records().iter().map(|r| r.x).collect();
        let e: Vec<bool> = d.records().iter().map(|r| r.delta).collect();
        let km = kaplan_meier_greenwood(&x, &e);
        assert!(km.windows(2).all(|w| w[1].survival <= w[0].survival));
        assert!(km.iter().all(|p| 0.0 <= p.lower
            && p.lower <= p.survival
            && p.survival <= p.upper
            && p.upper <= 1.0));
    }
}
