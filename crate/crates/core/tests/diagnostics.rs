use std::f64::consts::PI;

use drem::annihilate::{check_conditions, convergence_margin, ConditionSeries};
use drem::drem::{independence_diagnostic, CrossMoment};
use drem::experiment::remark1::{remark1_demo, window_case};
use drem::Error;
use proptest::prelude::*;

#[test]
fn whole_period_window_cancels_the_tone() {
    let c = window_case(2.0 * PI, 1.0, 1e-3, 5.0).unwrap();
    assert!(c.max_after_window < 1e-12, "{:e}", c.max_after_window);
}

#[test]
fn fractional_window_leaves_a_bounded_moment() {
    // a window of 1.5 periods keeps half a period: (1/T) int sin = 2/(T omega) at worst
    let c = window_case(2.0 * PI, 1.5, 1e-3, 5.0).unwrap();
    assert!(c.max_after_window > 0.5 * c.bound);
    assert!(c.max_after_window <= c.bound * (1.0 + 1e-6));
}

#[test]
fn demo_moment_shrinks_with_frequency() {
    let r = remark1_demo().unwrap();
    assert!(r.exact.max_after_window < 1e-12);
    assert!(r.off.max_after_window > 1e-2);
    let m: Vec<f64> = r.large_omega.iter().map(|c| c.max_after_window).collect();
    for pair in m.windows(2) {
        assert!(pair[1] < pair[0], "{m:?}");
    }
    for c in &r.large_omega {
        assert!(c.max_after_window <= c.bound * (1.0 + 1e-6));
    }
    let text = r.to_text();
    assert!(text.starts_with("omega,window,h,max_after_window,bound\n"));
    assert_eq!(text.lines().count(), 1 + 2 + r.large_omega.len());
}

fn sampled(t_end: f64, h: f64, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let steps = (t_end / h).round() as usize;
    (0..=steps).map(|k| f(k as f64 * h)).collect()
}

#[test]
fn independence_separates_distinct_frequencies() {
    let h = 1e-3;
    let phi: Vec<Vec<f64>> = sampled(6.0, h, |t| (2.0 * PI * t).sin())
        .into_iter()
        .zip(sampled(6.0, h, |t| (4.0 * PI * t).sin()))
        .map(|(a, b)| vec![a, b])
        .collect();
    let f = sampled(6.0, h, |t| (2.0 * PI * t).sin());
    let m = independence_diagnostic(&phi, Some(&f), 0.0, h, 2.0).unwrap();
    let last = m.last().unwrap();
    // same tone: mean of sin^2 = 1/2; different tone: 0
    assert!((last[0] - 0.5).abs() < 1e-6, "{last:?}");
    assert!(last[1].abs() < 1e-9, "{last:?}");
}

#[test]
fn independence_needs_the_perturbation() {
    let phi = vec![vec![1.0]; 10];
    assert!(matches!(
        independence_diagnostic(&phi, None, 0.0, 0.1, 0.5),
        Err(Error::MissingTruth)
    ));
    assert!(independence_diagnostic(&phi, Some(&[0.0; 3]), 0.0, 0.1, 0.5).is_err());
}

#[test]
fn cross_moment_rejects_channel_changes() {
    let mut cm = CrossMoment::new(2, 0.0, 0.1, 1.0).unwrap();
    cm.push(&[1.0, 2.0], 1.0).unwrap();
    assert!(cm.push(&[1.0], 1.0).is_err());
}

#[test]
fn margin_is_zero_without_excitation() {
    assert_eq!(convergence_margin(1.0, 0.0, 1.0, 1.0), 0.0);
    assert_eq!(convergence_margin(1.0, -1.0, 1.0, 1.0), 0.0);
    assert_eq!(convergence_margin(2.0, 0.5, 0.25, 4.0), 2.0 * 0.25 + 1.0 + 0.5);
}

#[test]
fn condition_report_from_a_ramp() {
    // excitation switches on at the third sample and stays on
    let t = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let series = ConditionSeries {
        t: t.clone(),
        gram_eigs: vec![(0.0, 0.1), (0.0, 0.5), (0.2, 1.0), (0.3, 1.0), (0.25, 2.0)],
        m_abs: vec![0.0, 0.0, 0.5, 0.6, 0.7],
        beta_window: vec![],
        margins: vec![("law20".into(), vec![-5.0, -5.0, 0.1, 0.3, 0.2])],
        w_abs: vec![vec![9.0], vec![9.0], vec![0.1], vec![0.4], vec![0.2]],
    };
    let r = check_conditions(&series);
    assert!(r.excitation.satisfied);
    assert_eq!(r.excitation.t_f, Some(2.0));
    assert_eq!((r.excitation.alpha_low, r.excitation.alpha_high), (0.2, 2.0));
    let m = r.m_instantaneous.as_ref().unwrap();
    assert!(m.satisfied);
    assert_eq!((m.low, m.high), (0.5, 0.7));
    assert!(r.m_windowed.is_none());
    let law = r.margin("law20").unwrap();
    assert!(law.satisfied);
    assert_eq!(law.eta, 0.1);
    assert_eq!(r.w_tail, Some(vec![0.4]));
    assert!(r.to_text().contains("t_f = 2e0"));
}

#[test]
fn condition_report_when_excitation_drops_at_the_end() {
    let series = ConditionSeries {
        t: vec![0.0, 1.0, 2.0],
        gram_eigs: vec![(1.0, 1.0), (1.0, 1.0), (0.0, 1.0)],
        m_abs: vec![1.0, 1.0, 1.0],
        ..Default::default()
    };
    let r = check_conditions(&series);
    assert!(!r.excitation.satisfied);
    assert_eq!(r.excitation.t_f, None);
    assert!(!r.m_instantaneous.unwrap().satisfied);
    assert!(r.w_tail.is_none());
}

proptest! {
    /// With `kappa' = -gamma Delta (Delta kappa - 1) - Delta' kappa^2` and
    /// `Delta` exponential, `log|kappa - 1/Delta|` decays at the margin rate.
    #[test]
    fn margin_is_the_log_decay_rate_of_the_kappa_error(
        gamma in 0.1..5.0f64,
        d0 in 0.5..2.0f64,
        rho in -0.3..0.3f64,
        kappa in -3.0..3.0f64,
    ) {
        let delta = |t: f64| d0 * (rho * t).exp();
        let rate = |t: f64, k: f64| -gamma * delta(t) * (delta(t) * k - 1.0) - rho * delta(t) * k * k;
        // one RK4 step from t = 0
        let h = 1e-4;
        let k1 = rate(0.0, kappa);
        let k2 = rate(h / 2.0, kappa + h / 2.0 * k1);
        let k3 = rate(h / 2.0, kappa + h / 2.0 * k2);
        let k4 = rate(h, kappa + h * k3);
        let next = kappa + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let e0 = kappa - 1.0 / delta(0.0);
        let e1 = next - 1.0 / delta(h);
        prop_assume!(e0.abs() > 1e-3);
        let observed = -((e1 / e0).abs().ln()) / h;
        let margin = convergence_margin(gamma, delta(0.0), rho * delta(0.0), kappa);
        prop_assert!((observed - margin).abs() < 1e-2 * (1.0 + margin.abs()), "{observed} vs {margin}");
    }
}
