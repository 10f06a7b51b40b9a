//! Left-sided Riemann–Liouville fractional integrals and derivatives on a
//! uniform grid.
//!
//! `frac_integral` uses product integration: the singular factor
//! `(t_i - s)^{α-1}` is integrated exactly against the piecewise-linear
//! interpolant of the data. Node values that are not finite (a singular
//! power prefactor evaluated at `s = 0`) are excluded from the sum.

use crate::error::{domain, Result};
use crate::grid::GridFunction;
use crate::kernel::{alpha_h, check_hurst};
use crate::specfun::gamma;

/// `(I^α f)(t_i) = Γ(α)^{-1} ∫_0^{t_i} (t_i - s)^{α-1} f(s) ds` for `α ∈ (0, 2]`.
pub fn frac_integral(f: &GridFunction, alpha: f64) -> Result<GridFunction> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(domain(format!("fractional integral order must lie in (0, 2], got {alpha}")));
    }
    let grid = *f.grid();
    let n = grid.steps();
    let values = f.values();
    let p = alpha + 1.0;
    let pow: Vec<f64> = (0..=n + 1).map(|k| (k as f64).powf(p)).collect();
    // interior weights depend only on the lag m = i - j >= 1
    let interior: Vec<f64> = (0..=n)
        .map(|m| if m == 0 { 1.0 } else { pow[m + 1] - 2.0 * pow[m] + pow[m - 1] })
        .collect();
    let scale = grid.dt().powf(alpha) / gamma(alpha + 2.0)?;
    let usable = |v: f64| if v.is_finite() { v } else { 0.0 };

    let mut out = vec![0.0; n + 1];
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        let fi = i as f64;
        let first = pow[i - 1] - (fi - alpha - 1.0) * fi.powf(alpha);
        let mut acc = first * usable(values[0]);
        for j in 1..i {
            acc += interior[i - j] * values[j];
        }
        acc += values[i];
        *slot = scale * acc;
    }
    GridFunction::new(grid, out)
}

/// `D^α f = d/dt I^{1-α} f` for `α ∈ (0, 1)`, with a forward difference
/// (backward at the last node).
pub fn frac_derivative(f: &GridFunction, alpha: f64) -> Result<GridFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("fractional derivative order must lie in (0, 1), got {alpha}")));
    }
    let integral = frac_integral(f, 1.0 - alpha)?;
    let j = integral.values();
    let n = f.grid().steps();
    let dt = f.grid().dt();
    let out = (0..=n)
        .map(|i| if i < n { (j[i + 1] - j[i]) / dt } else { (j[n] - j[n - 1]) / dt })
        .collect();
    GridFunction::new(*f.grid(), out)
}

/// Multiplies node values by `s^exponent`. At `s = 0` the product is taken as
/// its right limit 0 when the power vanishes there, and excluded (NaN, later
/// given zero weight) when the power is singular.
fn power_prefactor(f: &GridFunction, exponent: f64) -> GridFunction {
    let grid = *f.grid();
    f.map_values(|i, v| {
        if i == 0 {
            if exponent == 0.0 {
                v
            } else if exponent > 0.0 {
                0.0
            } else {
                f64::NAN
            }
        } else {
            grid.t(i).powf(exponent) * v
        }
    })
}

/// `K_H f` through the fractional-calculus factorisation
/// `I^{2H} s^{1/2-H} I^{1/2-H} s^{H-1/2} f` (H <= 1/2) or
/// `I^1 s^{H-1/2} I^{H-1/2} s^{1/2-H} f` (H >= 1/2).
///
/// The factorisation holds for the kernel normalised by `Γ(H+1/2)^{-1}`; the
/// result is rescaled by `Γ(H+1/2)·α_H` to match [`crate::kernel::kernel_kh`].
pub fn compose_kh_via_fractional(f: &GridFunction, hurst: f64) -> Result<GridFunction> {
    check_hurst(hurst)?;
    let beta = hurst - 0.5;
    let raw = if beta == 0.0 {
        frac_integral(f, 1.0)?
    } else if beta < 0.0 {
        let inner = frac_integral(&power_prefactor(f, beta), -beta)?;
        frac_integral(&power_prefactor(&inner, -beta), 2.0 * hurst)?
    } else {
        let inner = frac_integral(&power_prefactor(f, -beta), beta)?;
        frac_integral(&power_prefactor(&inner, beta), 1.0)?
    };
    let scale = gamma(hurst + 0.5)? * alpha_h(hurst)?;
    Ok(raw.map_values(|_, v| scale * v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn first_order_integral_is_cumulative() {
        let g = grid(64);
        let one = GridFunction::from_fn(g, |_| 1.0);
        let out = frac_integral(&one, 1.0).unwrap();
        for i in 0..=64 {
            assert!((out[i] - g.t(i)).abs() < 1e-13);
        }
    }

    #[test]
    fn integral_of_constant_closed_form() {
        // I^α 1 = t^α / Γ(α+1); the product rule is exact for linear data
        let g = grid(200);
        let one = GridFunction::from_fn(g, |_| 1.0);
        for &alpha in &[0.2, 0.5, 0.85, 1.4, 2.0] {
            let out = frac_integral(&one, alpha).unwrap();
            let c = gamma(alpha + 1.0).unwrap();
            for i in 0..=200 {
                let exact = g.t(i).powf(alpha) / c;
                assert!((out[i] - exact).abs() < 1e-12, "alpha={alpha} i={i}");
            }
        }
    }

    #[test]
    fn integral_of_constant_against_quadrature() {
        // independent route: direct tanh-sinh of (t-s)^{α-1}/Γ(α)
        let g = grid(50);
        let one = GridFunction::from_fn(g, |_| 1.0);
        let alpha = 0.35;
        let out = frac_integral(&one, alpha).unwrap();
        let ga = gamma(alpha).unwrap();
        for &i in &[7, 25, 50] {
            let t = g.t(i);
            let q = crate::quad::tanh_sinh(|_, _, db| db.powf(alpha - 1.0) / ga, 0.0, t, 1e-13);
            assert!((out[i] - q).abs() < 1e-10);
        }
    }

    #[test]
    fn semigroup_half_half_is_plain_integral() {
        let g = grid(4096);
        let f = GridFunction::from_fn(g, |s| s);
        let twice = frac_integral(&frac_integral(&f, 0.5).unwrap(), 0.5).unwrap();
        for i in 1..=4096 {
            let t = g.t(i);
            let target = t * t / 2.0;
            if t > 0.05 {
                assert!(((twice[i] - target) / target).abs() < 1e-3, "t={t}");
            }
        }
    }

    #[test]
    fn half_derivative_of_sqrt() {
        let g = grid(2048);
        let f = GridFunction::from_fn(g, f64::sqrt);
        let d = frac_derivative(&f, 0.5).unwrap();
        let target = std::f64::consts::PI.sqrt() / 2.0;
        for i in 16..=2048 {
            assert!((d[i] - target).abs() < 5e-3, "i={i}: {}", d[i]);
        }
    }

    #[test]
    fn derivative_of_zero() {
        let g = grid(32);
        let d = frac_derivative(&GridFunction::zeros(g), 0.3).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn order_checks() {
        let f = GridFunction::zeros(grid(8));
        assert!(frac_integral(&f, 0.0).is_err());
        assert!(frac_integral(&f, -1.0).is_err());
        assert!(frac_derivative(&f, 1.0).is_err());
        assert!(frac_derivative(&f, 0.0).is_err());
        assert!(compose_kh_via_fractional(&f, 1.0).is_err());
    }

    #[test]
    fn composition_at_half_is_plain_integral() {
        let g = grid(128);
        let f = GridFunction::from_fn(g, |s| (3.0 * s).cos());
        let a = compose_kh_via_fractional(&f, 0.5).unwrap();
        let b = frac_integral(&f, 1.0).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-14);
        let zero = compose_kh_via_fractional(&GridFunction::zeros(g), 0.7).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    proptest::proptest! {
        #[test]
        fn integral_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, alpha in 0.05f64..2.0) {
            let g = grid(40);
            let f = GridFunction::from_fn(g, |s| (2.0 * s).sin());
            let h = GridFunction::from_fn(g, |s| 1.0 + s * s);
            let comb = GridFunction::from_fn(g, |s| a * (2.0 * s).sin() + b * (1.0 + s * s));
            let lhs = frac_integral(&comb, alpha).unwrap();
            let fi = frac_integral(&f, alpha).unwrap();
            let hi = frac_integral(&h, alpha).unwrap();
            for i in 0..=40 {
                let rhs = a * fi[i] + b * hi[i];
                proptest::prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }
}
