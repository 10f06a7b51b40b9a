use fbmlab_core::inequalities::{
    check_entropy_gradient, check_gradient_bound, check_harnack, check_log_harnack, check_shift_harnack,
    check_shift_log_harnack, probe_strong_feller, HarnackConstants,
};
use fbmlab_core::malliavin::{Ensemble, McConfig, TestFunction};
use fbmlab_core::quad::tanh_sinh;
use fbmlab_core::solver::{LinearModel, ModelBounds, ZeroDriftModel};
use fbmlab_core::stats::{mean, std_error};
use proptest::prelude::*;

fn cfg(hurst: f64, paths: usize) -> McConfig {
    McConfig { hurst, horizon: 1.0, steps: 64, paths, seed: 77 }
}

#[test]
fn constants_by_hand() {
    let b = ModelBounds { k1: 0.5, k2: 2.0, k3: 0.5, k4: 2.0, k5: 0.5, k6: 0.5, sigma_sup: 0.5 };
    let (c_h, h, t) = (1.3, 0.7, 2.0);
    let c = HarnackConstants::new(c_h, h, t, &b);
    let sing = c_h * c_h / (0.6 * 2f64.powf(1.4));
    assert!((c.c_grad - 8.0 * (0.25 * 2.0 / 3.0 + sing)).abs() < 1e-12);
    let s = sing + 4.0 * c_h * 0.5 * 2f64.powf(-0.2) / 3.6 + 0.25 * 2.0 / 3.0;
    assert!((c.s - s).abs() < 1e-12);
    assert!((c.shift_log - 4.0 * s).abs() < 1e-12);
    assert!((c.c_shift(4.0) - 4.0 / 3.0 * 4.0 * s).abs() < 1e-12);
}

#[test]
fn degenerate_cases_are_decided_exactly() {
    let m = LinearModel { kappa: 0.5 };
    for &h in &[0.5, 0.7] {
        let ens = Ensemble::new(&m, cfg(h, 1000)).unwrap();
        for p in [2.0, 4.0] {
            let r = check_harnack(&ens, 0.3, 0.3, TestFunction::TwoPlusSin, p).unwrap();
            assert!(r.exact && r.pass);
            let r = check_shift_harnack(&ens, 0.3, 0.0, TestFunction::Bump, p).unwrap();
            assert!(r.exact && r.pass);
        }
        let r = check_log_harnack(&ens, 0.3, 0.3, TestFunction::OnePlusGauss).unwrap();
        assert!(r.exact && r.pass && r.lhs <= r.rhs);
        let r = check_shift_log_harnack(&ens, 0.3, 0.0, TestFunction::OnePlusGauss).unwrap();
        assert!(r.exact && r.pass);
        let r = check_entropy_gradient(&ens, 0.3, 0.0, TestFunction::TwoPlusSin, 1.0).unwrap();
        assert!(r.exact && r.pass);
    }
}

#[test]
fn standard_checks_pass() {
    let m = LinearModel { kappa: 0.5 };
    let ens = Ensemble::new(&m, cfg(0.7, 4000)).unwrap();
    assert!(check_gradient_bound(&ens, 0.0, 1.0, TestFunction::Sin).unwrap().pass);
    assert!(check_harnack(&ens, 0.0, 1.0, TestFunction::TwoPlusSin, 2.0).unwrap().pass);
    assert!(check_log_harnack(&ens, 0.0, 0.5, TestFunction::OnePlusGauss).unwrap().pass);
    assert!(check_entropy_gradient(&ens, 0.0, 1.0, TestFunction::TwoPlusSin, 1.0).unwrap().pass);
}

/// `E g(x0 + s Z)` for `Z ~ N(0,1)` by quadrature over `[x0 - 12s, x0 + 12s]`.
fn gaussian_mean(g: impl Fn(f64) -> f64, x0: f64, s: f64) -> f64 {
    let dens = |z: f64| (-(z - x0).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    tanh_sinh(|z, _, _| g(z) * dens(z), x0 - 12.0 * s, x0 + 12.0 * s, 1e-12)
}

#[test]
fn shift_harnack_without_drift_matches_gaussian_oracle() {
    // X_T = x0 + B_T ~ N(x0, T^{2H})
    let (x0, y, p, h) = (0.2, 0.5, 2.0, 0.5);
    let ens = Ensemble::new(&ZeroDriftModel, cfg(h, 20_000)).unwrap();
    let f = TestFunction::OnePlusGauss;
    let xt = ens.terminal_values(x0).unwrap();
    let lhs_col: Vec<f64> = xt.iter().map(|&z| f.value(z)).collect();
    let rhs_col: Vec<f64> = xt.iter().map(|&z| f.value(z + y).powf(p)).collect();
    let lhs_oracle = gaussian_mean(|z| f.value(z), x0, 1.0);
    let rhs_oracle = gaussian_mean(|z| f.value(z + y).powf(p), x0, 1.0);
    assert!((mean(&lhs_col) - lhs_oracle).abs() < 3.0 * std_error(&lhs_col));
    assert!((mean(&rhs_col) - rhs_oracle).abs() < 3.0 * std_error(&rhs_col));
    let r = check_shift_harnack(&ens, x0, y, f, p).unwrap();
    assert!(r.pass);
    let c = HarnackConstants::for_ensemble(&ens).unwrap();
    assert!(lhs_oracle.powf(p) <= rhs_oracle * (c.c_shift(p) * y * y).exp());
}

#[test]
fn feller_probe_on_step_function() {
    let m = LinearModel { kappa: 0.5 };
    let ens = Ensemble::new(&m, cfg(0.7, 4000)).unwrap();
    let probe = probe_strong_feller(&ens, 0.0, TestFunction::Step(0.1), &[1.0, 0.3, 0.1, 0.03, 0.0]).unwrap();
    assert!(probe.report.pass, "{:?}", probe.rows);
    assert_eq!(probe.rows.last().unwrap().difference, 0.0);
    assert!(probe.rows[0].difference > probe.rows[3].difference);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn harnack_right_side_decreases_in_p(p in 1.1f64..6.0, dp in 0.1f64..3.0) {
        let m = LinearModel { kappa: 0.5 };
        let ens = Ensemble::new(&m, cfg(0.6, 200)).unwrap();
        let c = HarnackConstants::for_ensemble(&ens).unwrap();
        prop_assert!(c.harnack_exponent(p + dp, 0.7) < c.harnack_exponent(p, 0.7));
        let a = check_harnack(&ens, 0.0, 0.7, TestFunction::TwoPlusSin, p).unwrap();
        let b = check_harnack(&ens, 0.0, 0.7, TestFunction::TwoPlusSin, p + dp).unwrap();
        prop_assert!(a.constants["exp_factor"] > b.constants["exp_factor"]);
    }
}
