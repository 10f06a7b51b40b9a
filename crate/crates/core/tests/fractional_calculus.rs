use fbmlab_core::fraccalc::{compose_kh_via_fractional, frac_derivative, frac_integral};
use fbmlab_core::kernel::{apply_kh, build_weights};
use fbmlab_core::specfun::gamma;
use fbmlab_core::{GridFunction, TimeGrid};
use proptest::prelude::*;

fn grid(n: usize) -> TimeGrid {
    TimeGrid::new(1.0, n).unwrap()
}

#[test]
fn power_functions_map_to_power_functions() {
    // I^α t^μ = Γ(μ+1)/Γ(μ+1+α) t^{μ+α}
    let g = grid(2048);
    for &mu in &[1.0, 2.0, 1.5] {
        for &a in &[0.3, 0.8, 1.4] {
            let f = GridFunction::from_fn(g, |t| t.powf(mu));
            let got = frac_integral(&f, a).unwrap();
            let c = gamma(mu + 1.0).unwrap() / gamma(mu + 1.0 + a).unwrap();
            let want = GridFunction::from_fn(g, |t| c * t.powf(mu + a));
            assert!(got.max_abs_diff(&want).unwrap() < 1e-5, "mu={mu} a={a}");
        }
    }
}

#[test]
fn semigroup_on_quarter_lattice() {
    let g = grid(2048);
    let f = GridFunction::from_fn(g, |t| (3.0 * t).cos());
    for &a in &[0.25, 0.5, 0.75] {
        for &b in &[0.25, 0.5, 0.75] {
            let l = frac_integral(&frac_integral(&f, b).unwrap(), a).unwrap();
            let r = frac_integral(&f, a + b).unwrap();
            assert!(l.max_abs_diff(&r).unwrap() < 5e-3, "a={a} b={b}");
        }
    }
}

#[test]
fn derivative_inverts_integral_for_vanishing_start() {
    let g = grid(2048);
    for f in [
        GridFunction::from_fn(g, |t| t),
        GridFunction::from_fn(g, |t| (2.0 * t).sin()),
        GridFunction::from_fn(g, |t| t * (-t).exp()),
    ] {
        for &a in &[0.25, 0.5, 0.75] {
            let back = frac_derivative(&frac_integral(&f, a).unwrap(), a).unwrap();
            assert!(back.max_abs_diff(&f).unwrap() < 2e-2, "a={a}");
        }
    }
}

#[test]
fn composition_matches_kernel_weights() {
    let g = grid(2048);
    for &h in &[0.3, 0.5, 0.7] {
        let w = build_weights(g, h).unwrap();
        for f in [
            GridFunction::from_fn(g, |_| 1.0),
            GridFunction::from_fn(g, |t| t),
            GridFunction::from_fn(g, |t| (-t).exp()),
        ] {
            let a = apply_kh(&f, &w).unwrap();
            let b = compose_kh_via_fractional(&f, h).unwrap();
            assert!(a.max_abs_diff(&b).unwrap() < 1e-2, "H={h}");
        }
    }
}

#[test]
fn orders_out_of_range_rejected() {
    let f = GridFunction::from_fn(grid(8), |t| t);
    assert!(frac_integral(&f, 0.0).is_err());
    assert!(frac_integral(&f, 2.5).is_err());
    assert!(frac_derivative(&f, 1.0).is_err());
    assert!(compose_kh_via_fractional(&f, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn integral_preserves_sign(a in 0.05f64..2.0, shift in 0.0f64..2.0) {
        let f = GridFunction::from_fn(grid(64), |t| shift + (5.0 * t).sin().abs());
        let r = frac_integral(&f, a).unwrap();
        prop_assert!(r.values().iter().all(|&v| v >= 0.0));
        prop_assert_eq!(r.values()[0], 0.0);
    }

    #[test]
    fn semigroup_is_approximately_commutative(a in 0.1f64..0.9, b in 0.1f64..0.9) {
        let f = GridFunction::from_fn(grid(512), |t| t * (1.0 + t));
        let ab = frac_integral(&frac_integral(&f, b).unwrap(), a).unwrap();
        let ba = frac_integral(&frac_integral(&f, a).unwrap(), b).unwrap();
        prop_assert!(ab.max_abs_diff(&ba).unwrap() < 1e-4);
    }
}
