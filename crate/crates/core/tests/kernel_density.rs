use surropt_core::data::Arm;
use surropt_core::kernel::{subdensity, trapezoid, KernelSpec, SGrid};
use surropt_core::pte::{Analysis, EstimateOptions};
use surropt_core::sim::generate::{generate_setting, SettingId, SimSetting};
use surropt_core::survival::weighted_joint_tail;

fn uncensored(id: SettingId) -> SimSetting {
    SimSetting {
        censoring_rate: 1e-12,
        ..SimSetting::new(id)
    }
}

#[test]
fn treated_subdensity_matches_closed_form() {
    // Treated arm of setting 1: S ~ Exp(mean 6), T = 5 S E with E ~ Exp(1),
    // so P(T > 1 | S = s) = exp(-1 / (5 s)).
    let (_, d) = generate_setting(&uncensored(SettingId::One), 100_000, 31).unwrap();
    let analysis = Analysis::new(&d, &EstimateOptions::default(), None).unwrap();
    let fit = analysis.landmark(1.0).unwrap();
    let h = fit.bandwidths()[1];
    let f = fit.subdensity_t0(Arm::Treated);
    let mut worst: f64 = 0.0;
    for (&s, &v) in fit.grid().points().iter().zip(f) {
        if s < 3.0 * h || s > 1.0 - 3.0 * h {
            continue;
        }
        let exact = (-s / 6.0).exp() / 6.0 * (-1.0 / (5.0 * s)).exp();
        worst = worst.max((v - exact).abs());
    }
    assert!(worst < 0.02, "sup-norm error {worst}");
}

#[test]
fn subdensity_mass_matches_joint_probability() {
    let (_, d) = generate_setting(&SimSetting::new(SettingId::One), 20_000, 32).unwrap();
    let analysis = Analysis::new(&d, &EstimateOptions::default(), None).unwrap();
    let (t, t0) = (5.0, 2.0);
    let fit = analysis.landmark(t0).unwrap();
    let h = fit.bandwidths()[1];
    let w = analysis.weights(t).unwrap();
    let g = fit.grid();
    let lo = (g.lo() - 5.0 * h).max(1e-6);
    let hi = t0.min(g.hi() + 5.0 * h);
    let wide = SGrid::uniform(lo, hi, 2000).unwrap();
    let f = subdensity(
        &d,
        Arm::Treated,
        t,
        t0,
        &w,
        &wide,
        &KernelSpec::new(h, 0.06).unwrap(),
    )
    .unwrap();
    let mass = trapezoid(&f.grid, &f.values);
    // P(T > t, S <= t0) = P(T > t) - P(T > t, S > t0).
    let surv = surropt_core::survival::weighted_survival(&d, Arm::Treated, t, &w).unwrap();
    let target = surv - weighted_joint_tail(&d, Arm::Treated, t, t0, &w).unwrap();
    assert!((mass - target).abs() < 1e-2, "{mass} vs {target}");
}

#[test]
fn later_horizon_is_pointwise_smaller_without_censoring() {
    let (_, d) = generate_setting(&uncensored(SettingId::Two), 4000, 33).unwrap();
    let analysis = Analysis::new(&d, &EstimateOptions::default(), None).unwrap();
    let fit = analysis.landmark(2.0).unwrap();
    let w3 = analysis.weights(3.0).unwrap();
    let w5 = analysis.weights(5.0).unwrap();
    let f3 = fit.subdensity_treated(3.0, &w3);
    let f5 = fit.subdensity_treated(5.0, &w5);
    assert!(f5.iter().zip(&f3).all(|(a, b)| a <= b));
}

#[test]
fn unit_multipliers_reproduce_subdensity() {
    let (_, d) = generate_setting(&SimSetting::new(SettingId::Three), 2000, 34).unwrap();
    let ones = vec![1.0; d.len()];
    let opts = EstimateOptions::default();
    let a = Analysis::new(&d, &opts, None).unwrap();
    let b = Analysis::new(&d, &opts, Some(&ones)).unwrap();
    let (fa, fb) = (a.landmark(2.0).unwrap(), b.landmark(2.0).unwrap());
    for arm in Arm::BOTH {
        let (x, y) = (fa.subdensity_t0(arm), fb.subdensity_t0(arm));
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}
