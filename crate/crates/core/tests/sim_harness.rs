use surropt_core::inference::{Estimand, PerturbationConfig};
use surropt_core::sim::conditions::check_conditions;
use surropt_core::sim::generate::{generate_setting, SettingId, SimSetting};
use surropt_core::sim::oracle::OracleSample;
use surropt_core::sim::study::{run_study, StudyConfig};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn generated_laws_have_their_closed_form_means() {
    let n = 1_000_000;
    let (s, _) = generate_setting(&SimSetting::new(SettingId::One), n, 71).unwrap();
    // Exponential laws: the standard deviation equals the mean.
    let within = |v: &[f64], m: f64| (mean(v) - m).abs() < 3.0 * m / (v.len() as f64).sqrt();
    assert!(within(&s.s[1], 6.0));
    assert!(within(&s.s[0], 4.0));
    assert!(within(&s.c[0], 1.0 / 0.12));
    assert!(within(&s.c[1], 1.0 / 0.12));
    let (s, _) = generate_setting(&SimSetting::new(SettingId::Two), n, 72).unwrap();
    assert!(within(&s.s[1], 1.0 / 0.6));
    assert!(within(&s.s[0], 0.5));
}

#[test]
fn conditions_hold_for_first_setting() {
    let o = OracleSample::draw(&SimSetting::new(SettingId::One), 1_000_000, 73).unwrap();
    let r = check_conditions(o.sample(), 5.0, 2.0).unwrap();
    assert!(r.all_hold(), "{r:?}");
    let truth = o.truth(5.0, 2.0, 5.0).unwrap();
    assert!(0.0 < truth.pte && truth.pte < 1.0);
}

#[test]
fn condition_report_for_third_setting_is_finite() {
    let o = OracleSample::draw(&SimSetting::new(SettingId::Three), 1_000_000, 74).unwrap();
    let r = check_conditions(o.sample(), 5.0, 1.0).unwrap();
    for c in [r.c1, r.c2, r.c3, r.c4] {
        assert!(c.margin.is_finite());
    }
    if r.all_hold() {
        let t = o.truth(5.0, 1.0, 5.0).unwrap();
        assert!(0.0 < t.pte && t.pte < 1.0);
    }
}

#[test]
fn oracle_is_stable_across_seeds_and_orders_variants() {
    for id in SettingId::ALL {
        let a = OracleSample::draw(&SimSetting::new(id), 1_000_000, 75).unwrap();
        let b = OracleSample::draw(&SimSetting::new(id), 1_000_000, 76).unwrap();
        for t0 in [1.0, 2.0, 3.0] {
            let (x, y) = (
                a.truth(5.0, t0, 5.0).unwrap(),
                b.truth(5.0, t0, 5.0).unwrap(),
            );
            assert!(
                (x.pte - y.pte).abs() < 0.005,
                "{id:?} t0 = {t0}: {} vs {}",
                x.pte,
                y.pte
            );
            assert!((x.pte - x.pte_identity).abs() < 1e-3);
            assert!(x.pte_ind <= x.pte, "{id:?} t0 = {t0}");
        }
    }
}

#[test]
fn smoke_study_is_finite_and_reproducible() {
    let mut c = StudyConfig::new(
        vec![SimSetting::new(SettingId::One)],
        vec![1.0, 2.0],
        2,
        500,
        77,
    );
    c.perturbation = Some(PerturbationConfig {
        replicates: 2,
        ..Default::default()
    });
    c.oracle_m = 1_000_000;
    let t = run_study(&c).unwrap();
    assert_eq!(t.rows.len(), 2 * Estimand::ALL.len());
    for r in &t.rows {
        assert_eq!(r.failures, 0);
        assert!(!r.flagged);
        assert!(r.est.is_finite() && r.ese >= 0.0);
        if let Some(cp) = r.cp {
            assert!((0.0..=1.0).contains(&cp));
        }
    }
    let again = run_study(&c).unwrap();
    assert_eq!(t.to_json(), again.to_json());
    let (mut a, mut b) = (Vec::new(), Vec::new());
    t.write_csv(&mut a).unwrap();
    again.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with("setting,t0,metric,truth,est,bias,ese,ase,cp,reps,failures,flagged"));
}
