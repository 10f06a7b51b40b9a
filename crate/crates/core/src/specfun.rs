//! Gamma, Beta and the Gauss hypergeometric function.
//!
//! Only real arguments are supported. [`hyp2f1`] targets the region the
//! Volterra kernel needs, `z <= 0`, which it maps onto `[0, 1)` with the
//! Pfaff transformation before summing the series.

use std::f64::consts::PI;

use crate::error::{domain, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Relative stopping threshold for series summation.
const SERIES_EPS: f64 = 1e-16;
/// Hard cap on the number of series terms.
const SERIES_CAP: usize = 100_000;
/// Beyond this transformed argument the `1 - w` connection formula is used.
const CONNECTION_THRESHOLD: f64 = 0.75;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.round()
}

fn lanczos_sum(x: f64) -> f64 {
    let mut sum = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS[1..].iter().enumerate() {
        sum += c / (x + (i + 1) as f64);
    }
    sum
}

/// Γ(x) for real `x` that is not a non-positive integer.
///
/// Lanczos approximation (g = 7, 9 terms) with the reflection formula below 1/2.
pub fn gamma(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("gamma: non-finite argument {x}")));
    }
    if is_nonpositive_integer(x) {
        return Err(domain(format!("gamma: pole at {x}")));
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    if x == x.round() && x <= 171.0 {
        // exact factorials
        let mut acc = 1.0;
        let mut k = 2.0;
        while k < x {
            acc *= k;
            k += 1.0;
        }
        return acc;
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    let half = t.powf(0.5 * (z + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(z)
}

/// 1/Γ(x), zero at the poles.
pub fn recip_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        0.0
    } else {
        1.0 / gamma_unchecked(x)
    }
}

/// ln Γ(x) for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain(format!("ln_gamma: argument must be positive, got {x}")));
    }
    if x < 0.5 {
        return Ok((PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)?);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln())
}

/// B(x, y) = Γ(x)Γ(y)/Γ(x+y) for positive arguments.
pub fn beta(x: f64, y: f64) -> Result<f64> {
    if !(x > 0.0) || !(y > 0.0) {
        return Err(domain(format!("beta: arguments must be positive, got ({x}, {y})")));
    }
    if x + y < 170.0 {
        // multiply in a fixed order so that beta(x, y) == beta(y, x) bit for bit
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        Ok(gamma_unchecked(lo) * (gamma_unchecked(hi) / gamma_unchecked(lo + hi)))
    } else {
        Ok((ln_gamma(x)? + ln_gamma(y)? - ln_gamma(x + y)?).exp())
    }
}

/// Parameters of `F(a, b; c; z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeomParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub z: f64,
}

impl HypergeomParams {
    pub fn new(a: f64, b: f64, c: f64, z: f64) -> Self {
        Self { a, b, c, z }
    }
}

/// Gauss hypergeometric function `F(a, b; c; z)` for `z < 1`.
pub fn hyp2f1(p: HypergeomParams) -> Result<f64> {
    Hyp2f1::new(p.a, p.b, p.c)?.eval(p.z)
}

/// Plain power series, `|w| < 1`.
fn series(a: f64, b: f64, c: f64, w: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..SERIES_CAP {
        let kf = k as f64;
        term *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * w;
        sum += term;
        if term.abs() <= SERIES_EPS * sum.abs() {
            return Ok(sum);
        }
    }
    Err(domain(format!(
        "hyp2f1: series did not converge in {SERIES_CAP} terms (a={a}, b={b}, c={c}, w={w})"
    )))
}

/// Coefficients of the `w -> 1 - w` connection formula for fixed (a, b, c).
#[derive(Debug, Clone, Copy)]
struct Connection {
    /// c - a - b
    s: f64,
    regular: f64,
    singular: f64,
}

impl Connection {
    fn new(a: f64, b: f64, c: f64) -> Self {
        let s = c - a - b;
        let gc = gamma_unchecked(c);
        let regular = gc * gamma_unchecked(s) * recip_gamma(c - a) * recip_gamma(c - b);
        let singular = gc * gamma_unchecked(-s) * recip_gamma(a) * recip_gamma(b);
        Self { s, regular, singular }
    }

    fn eval(&self, a: f64, b: f64, c: f64, one_minus_w: f64) -> Result<f64> {
        let mut out = 0.0;
        if self.regular != 0.0 {
            out += self.regular * series(a, b, 1.0 - self.s, one_minus_w)?;
        }
        if self.singular != 0.0 {
            out += self.singular
                * one_minus_w.powf(self.s)
                * series(c - a, c - b, 1.0 + self.s, one_minus_w)?;
        }
        Ok(out)
    }
}

/// Distance of `c - a - b` from the nearest integer below which the
/// connection formula loses too many digits to cancellation.
const NEAR_INTEGER: f64 = 1e-3;
/// Offsets (in units of `NEAR_INTEGER`) of the interpolation nodes.
const INTERP_NODES: [f64; 6] = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];

/// Evaluation of `F(a, b; c; w)` for `w` near 1.
///
/// When `c - a - b` is within [`NEAR_INTEGER`] of an integer `m`, the two
/// terms of the connection formula nearly cancel (and are individually
/// infinite at `m`). `F` is analytic in `c`, so it is instead evaluated at six
/// values of `c` placing `c - a - b` at `m ± {1,2,3}·10^-3` and interpolated
/// back to the requested `c`.
#[derive(Debug, Clone, Copy)]
enum NearOne {
    Direct(Connection),
    Interpolated { nodes: [(f64, Connection); 6], at: f64 },
}

impl NearOne {
    fn new(a: f64, b: f64, c: f64) -> Self {
        let s = c - a - b;
        let m = s.round();
        let delta = s - m;
        if delta.abs() >= NEAR_INTEGER {
            return Self::Direct(Connection::new(a, b, c));
        }
        let nodes = INTERP_NODES.map(|o| {
            let ck = c - delta + o * NEAR_INTEGER;
            (ck, Connection::new(a, b, ck))
        });
        Self::Interpolated { nodes, at: delta / NEAR_INTEGER }
    }

    fn eval(&self, a: f64, b: f64, c: f64, one_minus_w: f64) -> Result<f64> {
        match self {
            Self::Direct(conn) => conn.eval(a, b, c, one_minus_w),
            Self::Interpolated { nodes, at } => {
                let mut out = 0.0;
                for (k, (ck, conn)) in nodes.iter().enumerate() {
                    let mut lagrange = 1.0;
                    for (l, o) in INTERP_NODES.iter().enumerate() {
                        if l != k {
                            lagrange *= (at - o) / (INTERP_NODES[k] - o);
                        }
                    }
                    out += lagrange * conn.eval(a, b, *ck, one_minus_w)?;
                }
                Ok(out)
            }
        }
    }
}

/// `F(a, b; c; ·)` with the transformation coefficients prepared once.
///
/// For `z < 0` the Pfaff identity `F(a,b;c;z) = (1-z)^{-a} F(a, c-b; c; z/(z-1))`
/// is applied; when the transformed argument is close to 1 the series is
/// replaced by the two-term connection formula in `1 - w`.
#[derive(Debug, Clone, Copy)]
pub struct Hyp2f1 {
    a: f64,
    b: f64,
    c: f64,
    pfaff_near_one: NearOne,
}

impl Hyp2f1 {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(domain("hyp2f1: non-finite parameter"));
        }
        if is_nonpositive_integer(c) {
            return Err(domain(format!("hyp2f1: c = {c} is a non-positive integer")));
        }
        let pfaff_near_one = NearOne::new(a, c - b, c);
        Ok(Self { a, b, c, pfaff_near_one })
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        let Self { a, b, c, .. } = *self;
        if !z.is_finite() {
            return Err(domain(format!("hyp2f1: non-finite argument {z}")));
        }
        if a == 0.0 || b == 0.0 || z == 0.0 {
            return Ok(1.0);
        }
        if z >= 1.0 {
            return Err(domain(format!("hyp2f1: argument {z} outside z < 1")));
        }
        if z > 0.0 {
            return series(a, b, c, z);
        }
        let one_minus_z = 1.0 - z;
        let w = z / (z - 1.0);
        let prefactor = one_minus_z.powf(-a);
        let bt = c - b;
        if bt == 0.0 {
            return Ok(prefactor);
        }
        let terminating = is_nonpositive_integer(a) || is_nonpositive_integer(bt);
        let value = if w > CONNECTION_THRESHOLD && !terminating {
            self.pfaff_near_one.eval(a, bt, c, 1.0 / one_minus_z)?
        } else {
            series(a, bt, c, w)?
        };
        Ok(prefactor * value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn gamma_known_values() {
        assert_eq!(gamma(1.0).unwrap(), 1.0);
        assert_eq!(gamma(5.0).unwrap(), 24.0);
        assert!(rel(gamma(0.5).unwrap(), PI.sqrt()) < 1e-14);
        // Γ(1.5) = √π/2, Γ(-0.5) = -2√π
        assert!(rel(gamma(1.5).unwrap(), PI.sqrt() / 2.0) < 1e-14);
        assert!(rel(gamma(-0.5).unwrap(), -2.0 * PI.sqrt()) < 1e-14);
        // reference values (Abramowitz & Stegun / mpmath)
        assert!(rel(gamma(0.05).unwrap(), 19.470_085_311_255_512) < 1e-12);
        assert!(rel(gamma(0.1).unwrap(), 9.513_507_698_668_732) < 1e-12);
        assert!(rel(gamma(2.5).unwrap(), 1.329_340_388_179_137) < 1e-12);
        assert!(rel(gamma(10.3).unwrap(), 716_430.689_062_376_4) < 1e-12);
        assert!(rel(gamma(49.5).unwrap(), 8.667_601_843_135_272e61) < 1e-12);
        assert!(rel(gamma(50.0).unwrap(), 6.082_818_640_342_675e62) < 1e-12);
    }

    #[test]
    fn gamma_poles_are_domain_errors() {
        for x in [0.0, -1.0, -7.0] {
            assert!(matches!(gamma(x), Err(crate::Error::Domain(_))));
        }
        assert_eq!(recip_gamma(-3.0), 0.0);
    }

    #[test]
    fn gamma_matches_stirling_for_moderate_arguments() {
        // independent route: Stirling series with 5 correction terms
        let stirling = |x: f64| -> f64 {
            let inv = 1.0 / x;
            let corr = 1.0 + inv / 12.0 + inv.powi(2) / 288.0 - 139.0 * inv.powi(3) / 51_840.0
                - 571.0 * inv.powi(4) / 2_488_320.0;
            (2.0 * PI / x).sqrt() * (x / std::f64::consts::E).powf(x) * corr
        };
        for &x in &[20.5, 23.0, 31.7, 40.2] {
            assert!(rel(gamma(x).unwrap(), stirling(x)) < 1e-9, "x={x}");
        }
    }

    #[test]
    fn ln_gamma_consistent() {
        for &x in &[0.2, 1.7, 9.9, 40.0] {
            assert!((ln_gamma(x).unwrap() - gamma(x).unwrap().ln()).abs() < 1e-12);
        }
        assert!(ln_gamma(-1.0).is_err());
    }

    #[test]
    fn beta_values() {
        assert!(rel(beta(1.0, 1.0).unwrap(), 1.0) < 1e-15);
        assert!(rel(beta(0.5, 0.5).unwrap(), PI) < 1e-13);
        assert!(rel(beta(2.0, 3.0).unwrap(), 1.0 / 12.0) < 1e-14);
        assert!(rel(beta(100.0, 90.5).unwrap(), (ln_gamma(100.0).unwrap() + ln_gamma(90.5).unwrap() - ln_gamma(190.5).unwrap()).exp()) < 1e-12);
        assert!(beta(0.0, 1.0).is_err());
        assert!(beta(1.0, -2.0).is_err());
    }

    #[test]
    fn hyp2f1_trivial_cases() {
        assert_eq!(hyp2f1(HypergeomParams::new(0.3, 0.7, 1.2, 0.0)).unwrap(), 1.0);
        assert_eq!(hyp2f1(HypergeomParams::new(0.3, 0.0, 1.2, -5.0)).unwrap(), 1.0);
        assert_eq!(hyp2f1(HypergeomParams::new(0.0, 0.4, 1.2, -0.5)).unwrap(), 1.0);
    }

    #[test]
    fn hyp2f1_log_identity() {
        // F(1,1;2;z) = -ln(1-z)/z
        let v = hyp2f1(HypergeomParams::new(1.0, 1.0, 2.0, -1.0)).unwrap();
        assert!(rel(v, std::f64::consts::LN_2) < 1e-12);
        for &z in &[-0.3, -4.0, -250.0, 0.4] {
            let v = hyp2f1(HypergeomParams::new(1.0, 1.0, 2.0, z)).unwrap();
            assert!(rel(v, -(1.0 - z).ln() / z) < 1e-10, "z={z}");
        }
    }

    #[test]
    fn hyp2f1_closed_forms_far_out() {
        // F(a,b;b;z) = (1-z)^{-a}
        for &z in &[-0.5, -20.0, -1e4, -1e7] {
            let v = hyp2f1(HypergeomParams::new(0.37, 1.3, 1.3, z)).unwrap();
            assert!(rel(v, (1.0 - z).powf(-0.37)) < 1e-10, "z={z}");
        }
        // F(1/2,1/2;3/2;-x^2) = asinh(x)/x
        for &x in &[0.5_f64, 3.0, 40.0, 2_000.0] {
            let v = hyp2f1(HypergeomParams::new(0.5, 0.5, 1.5, -x * x)).unwrap();
            assert!(rel(v, x.asinh() / x) < 1e-10, "x={x}");
        }
    }

    #[test]
    fn hyp2f1_rejects_bad_parameters() {
        assert!(hyp2f1(HypergeomParams::new(0.5, 0.5, -2.0, -0.1)).is_err());
        assert!(hyp2f1(HypergeomParams::new(0.5, 0.5, 1.5, 1.0)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn beta_is_symmetric(x in 0.01f64..30.0, y in 0.01f64..30.0) {
            let d = (beta(x, y).unwrap() - beta(y, x).unwrap()).abs();
            proptest::prop_assert!(d <= 1e-14 * beta(x, y).unwrap());
        }

        #[test]
        fn gamma_recurrence(x in 0.1f64..20.0) {
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            proptest::prop_assert!(((lhs - rhs) / rhs).abs() <= 1e-12);
        }

        #[test]
        fn hyp2f1_zero_parameter_is_one(a in -3.0f64..3.0, c in 0.1f64..3.0, z in -100.0f64..0.9) {
            proptest::prop_assert_eq!(hyp2f1(HypergeomParams::new(a, 0.0, c, z)).unwrap(), 1.0);
            proptest::prop_assert_eq!(hyp2f1(HypergeomParams::new(0.0, a, c, z)).unwrap(), 1.0);
        }
    }
}
