//! Monte Carlo verification of gradient, Harnack and log-Harnack type
//! inequalities for the semigroup `P_T f(x) = E f(X_T^x)`.
//!
//! All checks are one-sided: a PASS certifies that the sampled data do not
//! violate the inequality beyond the statistical slack of
//! [`CheckReport::statistical`]. Both sides are always evaluated on the same
//! Wiener paths. When the two sides are functions of a single shared sample
//! for which the inequality is Jensen's inequality, the check is decided
//! exactly instead.

use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::malliavin::{ControlFunction, DiscreteControl, EntropyColumns, Ensemble, SampleRequest, TestFunction};
use crate::report::{CheckReport, SE_SLACK};
use crate::solver::ModelBounds;
use crate::stats::{delta_method_se, mean, std_error};

/// Relative tolerance granted to the right-hand sides.
pub const HARNACK_TOL: f64 = 1e-2;

/// Constants of the inequalities for one `(H, T)` and model bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnackConstants {
    pub c_h: f64,
    pub hurst: f64,
    pub horizon: f64,
    /// `2K₄²(K₃²T/3 + C_H²/((2-2H)T^{2H}))`
    pub c_grad: f64,
    /// `C_H²/((2-2H)T^{2H}) + 4C_H K₁ T^{1/2-H}/(5-2H) + K₁²T/3`
    pub s: f64,
    /// `K₂² S`, the shift log-Harnack constant per unit `y²`.
    pub shift_log: f64,
}

impl HarnackConstants {
    pub fn new(c_h: f64, hurst: f64, horizon: f64, b: &ModelBounds) -> Self {
        let t = horizon;
        let singular = c_h * c_h / ((2.0 - 2.0 * hurst) * t.powf(2.0 * hurst));
        let c_grad = 2.0 * b.k4 * b.k4 * (b.k3 * b.k3 * t / 3.0 + singular);
        let s = singular
            + 4.0 * c_h * b.k1 * t.powf(0.5 - hurst) / (5.0 - 2.0 * hurst)
            + b.k1 * b.k1 * t / 3.0;
        Self { c_h, hurst, horizon, c_grad, s, shift_log: b.k2 * b.k2 * s }
    }

    /// Constants of an ensemble's model, rejecting infinite bounds.
    pub fn for_ensemble(ens: &Ensemble<'_>) -> Result<Self> {
        let cfg = ens.config();
        let c = Self::new(ens.constants().c_h, cfg.hurst, cfg.horizon, &ens.model().bounds());
        if [c.c_grad, c.shift_log].iter().all(|v| v.is_finite()) {
            Ok(c)
        } else {
            Err(Error::Config(format!("model '{}' has unbounded coefficients", ens.model().name())))
        }
    }

    /// `pK₂²S/(p-1)`
    pub fn c_shift(&self, p: f64) -> f64 {
        p / (p - 1.0) * self.shift_log
    }

    /// Exponent `p/(p-1)·C_grad·d²` of the Harnack inequality.
    pub fn harnack_exponent(&self, p: f64, distance: f64) -> f64 {
        p / (p - 1.0) * self.c_grad * distance * distance
    }
}

fn require_additive(ens: &Ensemble<'_>) -> Result<()> {
    if ens.model().is_additive() {
        Ok(())
    } else {
        Err(usage(format!(
            "this inequality is stated for additive noise; model '{}' is not",
            ens.model().name()
        )))
    }
}

fn require_exponent(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("Harnack exponent must exceed 1, got {p}")))
    }
}

fn require_nonnegative_bounded(f: TestFunction) -> Result<()> {
    match (f.infimum(), f.sup_norm()) {
        (Some(m), Some(_)) if m >= 0.0 => Ok(()),
        _ => Err(domain(format!("test function '{f}' must be non-negative and bounded"))),
    }
}

fn require_bounded_away(f: TestFunction) -> Result<()> {
    match (f.infimum(), f.sup_norm()) {
        (Some(m), Some(_)) if m > 0.0 => Ok(()),
        _ => Err(domain(format!("test function '{f}' must be bounded and bounded away from 0"))),
    }
}

fn bismut_columns(ens: &Ensemble<'_>, x0: f64, y: f64, f: TestFunction) -> Result<(Vec<f64>, Vec<f64>)> {
    let dc = DiscreteControl::new(&ControlFunction::Default, ens.weights(), ens.constants().c_h)?;
    let s = ens.samples(x0, &SampleRequest { y, bismut: Some(&dc), ..Default::default() })?;
    let weighted = s.iter().map(|p| f.value(p.x_t) * p.bismut_weight).collect();
    let values = s.iter().map(|p| f.value(p.x_t)).collect();
    Ok((weighted, values))
}

fn with_common(r: CheckReport, c: &HarnackConstants) -> CheckReport {
    r.with_constant("C_H", c.c_h)
        .with_constant("H", c.hurst)
        .with_constant("T", c.horizon)
}

/// `|∇_y P_T f(x0)|² <= C_grad |y|² P_T f²(x0)` with the gradient estimated
/// by the Bismut weight (valid for bounded measurable `f`).
pub fn check_gradient_bound(ens: &Ensemble<'_>, x0: f64, y: f64, f: TestFunction) -> Result<CheckReport> {
    require_additive(ens)?;
    if f.sup_norm().is_none() {
        return Err(domain(format!("test function '{f}' must be bounded")));
    }
    let c = HarnackConstants::for_ensemble(ens)?;
    let (g, values) = bismut_columns(ens, x0, y, f)?;
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    let k = c.c_grad * y * y;
    let name = "gradient bound";
    let report = if g.iter().all(|&v| v == 0.0) {
        CheckReport::exact(name, 0.0, k * mean(&sq))
    } else {
        let (m1, m2) = (mean(&g), mean(&sq));
        CheckReport::statistical(
            name,
            (m1 * m1, 2.0 * m1.abs() * std_error(&g)),
            (k * m2, k * std_error(&sq)),
            delta_method_se(&[&g, &sq], &[-2.0 * m1, k]),
            HARNACK_TOL,
        )
    };
    Ok(with_common(report, &c).with_constant("C_grad", c.c_grad))
}

/// `|∇_y P_T f| <= δ[P_T(f log f) - P_T f log P_T f] + C_grad |y|² P_T f / δ`
/// for positive bounded `f`.
pub fn check_entropy_gradient(
    ens: &Ensemble<'_>,
    x0: f64,
    y: f64,
    f: TestFunction,
    delta: f64,
) -> Result<CheckReport> {
    require_additive(ens)?;
    if !(delta > 0.0) {
        return Err(domain(format!("delta must be positive, got {delta}")));
    }
    if !f.is_positive() || f.sup_norm().is_none() {
        return Err(domain(format!("test function '{f}' must be positive and bounded")));
    }
    let c = HarnackConstants::for_ensemble(ens)?;
    let (g, values) = bismut_columns(ens, x0, y, f)?;
    let cols = EntropyColumns::new(values);
    let report = cols.check("entropy gradient", &g, delta, c.c_grad * y * y / delta, HARNACK_TOL);
    Ok(with_common(report, &c).with_constant("C_grad", c.c_grad).with_constant("delta", delta))
}

/// `(P_T f(x))^p <= P_T f^p(y) exp[p/(p-1) C_grad |x-y|²]` for non-negative
/// bounded `f`.
pub fn check_harnack(ens: &Ensemble<'_>, x: f64, y: f64, f: TestFunction, p: f64) -> Result<CheckReport> {
    require_exponent(p)?;
    require_additive(ens)?;
    require_nonnegative_bounded(f)?;
    let c = HarnackConstants::for_ensemble(ens)?;
    let fx: Vec<f64> = ens.terminal_values(x)?.iter().map(|&z| f.value(z)).collect();
    let fyp: Vec<f64> = if x == y {
        fx.iter().map(|v| v.powf(p)).collect()
    } else {
        ens.terminal_values(y)?.iter().map(|&z| f.value(z).powf(p)).collect()
    };
    let factor = c.harnack_exponent(p, x - y).exp();
    let (m1, m2) = (mean(&fx), mean(&fyp));
    let name = format!("harnack p={p}");
    let report = if x == y {
        CheckReport::exact(name, m1.powf(p), m2)
    } else {
        CheckReport::statistical(
            name,
            (m1.powf(p), p * m1.powf(p - 1.0) * std_error(&fx)),
            (m2 * factor, factor * std_error(&fyp)),
            delta_method_se(&[&fx, &fyp], &[-p * m1.powf(p - 1.0), factor]),
            HARNACK_TOL,
        )
    };
    Ok(with_common(report, &c)
        .with_constant("C_grad", c.c_grad)
        .with_constant("p", p)
        .with_constant("exp_factor", factor))
}

/// `P_T log f(x) <= log P_T f(y) + C_grad |x-y|²` for `f` bounded away from 0.
pub fn check_log_harnack(ens: &Ensemble<'_>, x: f64, y: f64, f: TestFunction) -> Result<CheckReport> {
    require_additive(ens)?;
    require_bounded_away(f)?;
    let c = HarnackConstants::for_ensemble(ens)?;
    let xt = ens.terminal_values(x)?;
    let logs: Vec<f64> = xt.iter().map(|&z| f.value(z).ln()).collect();
    let fy: Vec<f64> = if x == y {
        xt.iter().map(|&z| f.value(z)).collect()
    } else {
        ens.terminal_values(y)?.iter().map(|&z| f.value(z)).collect()
    };
    let shift = c.c_grad * (x - y) * (x - y);
    let (m1, m2) = (mean(&logs), mean(&fy));
    let report = if x == y {
        CheckReport::exact("log-harnack", m1, m2.ln())
    } else {
        CheckReport::statistical(
            "log-harnack",
            (m1, std_error(&logs)),
            (m2.ln() + shift, std_error(&fy) / m2),
            delta_method_se(&[&logs, &fy], &[-1.0, 1.0 / m2]),
            HARNACK_TOL,
        )
    };
    Ok(with_common(report, &c).with_constant("C_grad", c.c_grad))
}

/// `(P_T f)^p <= P_T{f(y+·)^p} exp[pK₂²S y²/(p-1)]` at `x0`.
pub fn check_shift_harnack(ens: &Ensemble<'_>, x0: f64, y: f64, f: TestFunction, p: f64) -> Result<CheckReport> {
    require_exponent(p)?;
    require_additive(ens)?;
    require_nonnegative_bounded(f)?;
    let c = HarnackConstants::for_ensemble(ens)?;
    let xt = ens.terminal_values(x0)?;
    let fx: Vec<f64> = xt.iter().map(|&z| f.value(z)).collect();
    let fsp: Vec<f64> = xt.iter().map(|&z| f.value(z + y).powf(p)).collect();
    let factor = (c.c_shift(p) * y * y).exp();
    let (m1, m2) = (mean(&fx), mean(&fsp));
    let name = format!("shift harnack p={p}");
    let report = if y == 0.0 {
        CheckReport::exact(name, m1.powf(p), m2)
    } else {
        CheckReport::statistical(
            name,
            (m1.powf(p), p * m1.powf(p - 1.0) * std_error(&fx)),
            (m2 * factor, factor * std_error(&fsp)),
            delta_method_se(&[&fx, &fsp], &[-p * m1.powf(p - 1.0), factor]),
            HARNACK_TOL,
        )
    };
    Ok(with_common(report, &c)
        .with_constant("C_shift(p)", c.c_shift(p))
        .with_constant("S", c.s)
        .with_constant("p", p))
}

/// `P_T log f <= log P_T{f(y+·)} + K₂²S y²` at `x0`.
pub fn check_shift_log_harnack(ens: &Ensemble<'_>, x0: f64, y: f64, f: TestFunction) -> Result<CheckReport> {
    require_additive(ens)?;
    require_bounded_away(f)?;
    let c = HarnackConstants::for_ensemble(ens)?;
    let xt = ens.terminal_values(x0)?;
    let logs: Vec<f64> = xt.iter().map(|&z| f.value(z).ln()).collect();
    let fs: Vec<f64> = xt.iter().map(|&z| f.value(z + y)).collect();
    let (m1, m2) = (mean(&logs), mean(&fs));
    let report = if y == 0.0 {
        CheckReport::exact("shift log-harnack", m1, m2.ln())
    } else {
        CheckReport::statistical(
            "shift log-harnack",
            (m1, std_error(&logs)),
            (m2.ln() + c.shift_log * y * y, std_error(&fs) / m2),
            delta_method_se(&[&logs, &fs], &[-1.0, 1.0 / m2]),
            HARNACK_TOL,
        )
    };
    Ok(with_common(report, &c).with_constant("K2^2*S", c.shift_log))
}

/// One radius of the continuity probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FellerRow {
    pub radius: f64,
    /// `|P_T f(x0 + r) - P_T f(x0)|`
    pub difference: f64,
    pub std_error: f64,
    /// `sqrt(C_grad) sup|f| r`, the Lipschitz bound implied by the gradient estimate.
    pub envelope: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FellerProbe {
    pub rows: Vec<FellerRow>,
    pub report: CheckReport,
}

/// Continuity of `r ↦ P_T f(x0 + r)` for bounded measurable `f`.
///
/// Each radius passes when the common-path difference stays below the
/// envelope (with the usual relative tolerance) plus three standard errors;
/// the summary report is the row with the smallest margin.
pub fn probe_strong_feller(ens: &Ensemble<'_>, x0: f64, f: TestFunction, radii: &[f64]) -> Result<FellerProbe> {
    require_additive(ens)?;
    let sup = f
        .sup_norm()
        .ok_or_else(|| domain(format!("test function '{f}' must be bounded")))?;
    if radii.is_empty() || radii.iter().any(|r| !r.is_finite()) {
        return Err(usage("strong Feller probe needs finite radii"));
    }
    let c = HarnackConstants::for_ensemble(ens)?;
    let base: Vec<f64> = ens.terminal_values(x0)?.iter().map(|&z| f.value(z)).collect();
    let mut rows = Vec::with_capacity(radii.len());
    let mut worst: Option<CheckReport> = None;
    for &r in radii {
        let diff: Vec<f64> = if r == 0.0 {
            vec![0.0; base.len()]
        } else {
            ens.terminal_values(x0 + r)?
                .iter()
                .zip(&base)
                .map(|(&z, b)| f.value(z) - b)
                .collect()
        };
        let d = mean(&diff);
        let se = std_error(&diff);
        let envelope = c.c_grad.sqrt() * sup * r.abs();
        let rep = CheckReport::statistical(
            format!("strong feller r={r}"),
            (d.abs(), se),
            (envelope, 0.0),
            se,
            HARNACK_TOL,
        );
        rows.push(FellerRow { radius: r, difference: d.abs(), std_error: se, envelope, pass: rep.pass });
        // the zero radius is decided exactly and says nothing about the envelope
        let tighter = worst.as_ref().is_none_or(|w| {
            w.rhs == 0.0 || (r != 0.0 && rep.margin + SE_SLACK * rep.diff_se < w.margin + SE_SLACK * w.diff_se)
        });
        if tighter {
            worst = Some(rep);
        }
    }
    let mut report = worst.expect("radii are non-empty");
    report.name = "strong feller".into();
    report.pass = rows.iter().all(|row| row.pass);
    Ok(FellerProbe { rows, report: with_common(report, &c).with_constant("C_grad", c.c_grad) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::malliavin::McConfig;
    use crate::solver::{LinearModel, TrigModel, ZeroDriftModel};

    fn cfg(hurst: f64) -> McConfig {
        McConfig { hurst, horizon: 1.0, steps: 64, paths: 2000, seed: 5 }
    }

    #[test]
    fn brownian_constants() {
        let b = ModelBounds { k1: 0.0, k2: 1.0, k3: 1.0, k4: 1.0, k5: 1.0, k6: 0.0, sigma_sup: 1.0 };
        let c = HarnackConstants::new(1.0, 0.5, 1.0, &b);
        assert!((c.c_grad - 8.0 / 3.0).abs() < 1e-12);
        assert!((c.s - 1.0).abs() < 1e-12);
        assert!((c.c_shift(2.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jensen_cases_are_exact() {
        let m = LinearModel { kappa: 0.5 };
        let ens = Ensemble::new(&m, cfg(0.7)).unwrap();
        let r = check_harnack(&ens, 0.2, 0.2, TestFunction::TwoPlusSin, 2.0).unwrap();
        assert!(r.exact && r.pass);
        let r = check_log_harnack(&ens, 0.2, 0.2, TestFunction::OnePlusGauss).unwrap();
        assert!(r.exact && r.pass);
        let r = check_shift_harnack(&ens, 0.2, 0.0, TestFunction::Bump, 4.0).unwrap();
        assert!(r.exact && r.pass);
        let r = check_gradient_bound(&ens, 0.2, 0.0, TestFunction::Sin).unwrap();
        assert!(r.exact && r.pass);
    }

    #[test]
    fn domain_errors() {
        let m = LinearModel { kappa: 0.5 };
        let ens = Ensemble::new(&m, cfg(0.5)).unwrap();
        assert!(matches!(check_harnack(&ens, 0.0, 1.0, TestFunction::Sin, 2.0), Err(Error::Domain(_))));
        assert!(matches!(check_harnack(&ens, 0.0, 1.0, TestFunction::Bump, 1.0), Err(Error::Domain(_))));
        assert!(matches!(check_log_harnack(&ens, 0.0, 1.0, TestFunction::Bump), Err(Error::Domain(_))));
        let t = TrigModel;
        let ens = Ensemble::new(&t, cfg(0.5)).unwrap();
        assert!(matches!(check_harnack(&ens, 0.0, 1.0, TestFunction::Bump, 2.0), Err(Error::Usage(_))));
    }

    #[test]
    fn constant_function_passes() {
        let m = ZeroDriftModel;
        let ens = Ensemble::new(&m, cfg(0.7)).unwrap();
        assert!(check_harnack(&ens, 0.0, 1.0, TestFunction::Const(2.0), 2.0).unwrap().pass);
        assert!(check_log_harnack(&ens, 0.0, 0.5, TestFunction::Const(2.0)).unwrap().pass);
        assert!(check_gradient_bound(&ens, 0.0, 1.0, TestFunction::Const(1.0)).unwrap().pass);
    }

    #[test]
    fn feller_probe_zero_radius() {
        let m = LinearModel { kappa: 0.5 };
        let ens = Ensemble::new(&m, cfg(0.7)).unwrap();
        let p = probe_strong_feller(&ens, 0.0, TestFunction::Step(0.1), &[0.5, 0.1, 0.0]).unwrap();
        assert_eq!(p.rows[2].difference, 0.0);
        assert!(p.report.pass, "{:?}", p.rows);
    }
}
