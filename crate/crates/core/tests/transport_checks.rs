use fbmlab_core::kernel::{build_weights, KernelConstants};
use fbmlab_core::malliavin::McConfig;
use fbmlab_core::noise::sample_wiener;
use fbmlab_core::solver::{OuModel, ZeroDriftModel};
use fbmlab_core::transport::{
    check_maximal_inequality, check_t2, coupled_paths, default_theta, maximal_constant, relative_entropy,
    DriftShift, Metric, PhiSpec, ShiftSpec, TransportConstants,
};
use fbmlab_core::{Error, TimeGrid};
use proptest::prelude::*;

fn cfg(hurst: f64, paths: usize) -> McConfig {
    McConfig { hurst, horizon: 1.0, steps: 128, paths, seed: 31 }
}

#[test]
fn deterministic_shift_without_drift() {
    // X - Y = K_H u, so sup_t |X - Y|² = sup_t (K_H 1)(t)² for u ≡ 1
    let c = cfg(0.7, 100);
    let r = check_t2(&ZeroDriftModel, 0.0, &ShiftSpec::Const(1.0), Metric::Uniform, c, None).unwrap();
    assert!(r.pass);
    assert!(r.lhs_se < 1e-12 * r.lhs);
    let w = build_weights(TimeGrid::new(1.0, 128).unwrap(), 0.7).unwrap();
    let image = w.apply_fn(|_| 1.0);
    let sup = image.values().iter().fold(0.0f64, |m, v| m.max(v * v));
    assert!((r.lhs - sup).abs() < 1e-3 * sup);
    assert!((r.constants["entropy"] - 0.5).abs() < 1e-12);
}

#[test]
fn ou_shift_checks() {
    for &h in &[0.6, 0.75] {
        for metric in [Metric::Uniform, Metric::L2] {
            let r = check_t2(&OuModel { theta: 1.0 }, 0.0, &ShiftSpec::Const(0.5), metric, cfg(h, 500), None).unwrap();
            assert!(r.pass, "{r:?}");
        }
    }
}

#[test]
fn l2_distance_is_dominated_by_horizon_times_uniform() {
    let g = TimeGrid::new(1.5, 64).unwrap();
    let w = build_weights(g, 0.65).unwrap();
    let u = DriftShift::from_fn(g, |t| (4.0 * t).sin());
    for k in 0..20 {
        let (x, y) = coupled_paths(&OuModel { theta: 0.7 }, 0.1, &u, &sample_wiener(g, 5, k), &w).unwrap();
        assert!(Metric::L2.distance_sq(&x, &y) <= 1.5 * Metric::Uniform.distance_sq(&x, &y));
    }
}

#[test]
fn zero_shift_collapses_exactly() {
    let r = check_t2(&OuModel { theta: 1.0 }, 0.2, &ShiftSpec::Const(0.0), Metric::L2, cfg(0.7, 100), None).unwrap();
    assert!(r.exact && r.pass);
    assert_eq!(r.lhs, 0.0);
}

#[test]
fn short_memory_refused() {
    let r = check_t2(&ZeroDriftModel, 0.0, &ShiftSpec::Const(1.0), Metric::Uniform, cfg(0.5, 100), None);
    assert!(matches!(r, Err(Error::Hypothesis(_))));
    let r = check_maximal_inequality(PhiSpec::Const(1.0), 2.0, cfg(0.3, 100), None);
    assert!(matches!(r, Err(Error::Hypothesis(_))));
}

#[test]
fn maximal_constant_assembly() {
    // p = 2, H = 0.6, θ = 0.1: ᾱ² · 1/(2θ) · 1/((H+1/2-θ)·2 + 2H - 3) · T^{4H-2θ-1}
    let ab = KernelConstants::new(0.6).unwrap().alpha_bar_h.unwrap();
    let t: f64 = 2.0;
    let want = ab * ab * 5.0 * 5.0 * t.powf(2.4 - 0.2 - 1.0);
    let got = maximal_constant(0.6, t, 2.0, 0.1).unwrap();
    assert!((got - want).abs() < 1e-12 * want);
    assert!((default_theta(0.6) - 0.1).abs() < 1e-15);
}

#[test]
fn transport_constant_relations() {
    for &h in &[0.55, 0.7, 0.9] {
        for &k6 in &[0.0, 0.3, 1.0] {
            let c = TransportConstants::new(h, 1.3, k6, 1.0, default_theta(h)).unwrap();
            assert!(c.alpha > 0.0 && c.beta > 0.0);
            assert!(c.beta <= 1.3 * c.alpha * (1.0 + 1e-12));
        }
    }
}

#[test]
fn maximal_inequality_lhs_is_fbm_running_maximum() {
    // φ ≡ 1: the left side is E sup_t B_t², at least E B_T² = T^{2H}
    let r = check_maximal_inequality(PhiSpec::Const(1.0), 2.0, cfg(0.75, 4000), None).unwrap();
    assert!(r.lhs + 3.0 * r.lhs_se >= 1.0);
    assert!((r.rhs - r.constants["C(p)"]).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn entropy_is_even_and_nonnegative(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let u = DriftShift::from_fn(g, |t| a + b * t);
        let v = DriftShift::from_fn(g, |t| -(a + b * t));
        prop_assert_eq!(relative_entropy(&u), relative_entropy(&v));
        prop_assert!(relative_entropy(&u) >= 0.0);
    }
}
