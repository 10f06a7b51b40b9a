//! Transportation cost checks through synchronous coupling, and the maximal
//! inequality for Volterra stochastic integrals.
//!
//! A deterministic drift shift `u` changes the driving noise to
//! `dW + u dt`. Solving the equation once with the shifted noise and once
//! with the original increments gives a coupling of the shifted law and the
//! reference law, so `E d(X, Y)²` bounds the squared Wasserstein distance
//! from above, while the relative entropy is exactly `½∫u²dt`.

use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{KernelConstants, KernelWeights};
use crate::malliavin::{Ensemble, McConfig};
use crate::noise::{fbm_from_wiener, WienerIncrements};
use crate::report::CheckReport;
use crate::solver::{solve_volterra, CoefficientModel, SolutionPath};
use crate::stats::{mean, pairwise_sum, std_error};

/// A deterministic shift sampled at the cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftShift {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl DriftShift {
    pub fn from_fn(grid: TimeGrid, u: impl Fn(f64) -> f64) -> Self {
        Self { grid, values: grid.midpoints().into_iter().map(u).collect() }
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.steps()] }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Shift profiles accepted on the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ShiftSpec {
    /// `u ≡ c`
    Const(f64),
    /// `u(t) = c·t`
    Linear(f64),
    /// `(t, u)` samples, interpolated linearly and held constant outside.
    Table(Vec<(f64, f64)>),
}

impl ShiftSpec {
    pub fn parse_table(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<_> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            match cols.as_slice() {
                [Ok(t), Ok(u)] if t.is_finite() && u.is_finite() => rows.push((*t, *u)),
                _ if ln == 0 && rows.is_empty() => continue,
                _ => return Err(usage(format!("shift table: bad row {}: '{line}'", ln + 1))),
            }
        }
        if rows.len() < 2 || rows.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(usage("shift table needs at least two rows with increasing t"));
        }
        Ok(Self::Table(rows))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Linear(c) => c * t,
            Self::Table(rows) => {
                let last = rows.len() - 1;
                if t <= rows[0].0 {
                    return rows[0].1;
                }
                if t >= rows[last].0 {
                    return rows[last].1;
                }
                let k = rows.partition_point(|r| r.0 <= t) - 1;
                let (a, b) = (rows[k], rows[k + 1]);
                a.1 + (t - a.0) / (b.0 - a.0) * (b.1 - a.1)
            }
        }
    }

    pub fn on_grid(&self, grid: TimeGrid) -> DriftShift {
        DriftShift::from_fn(grid, |t| self.eval(t))
    }
}

impl FromStr for ShiftSpec {
    type Err = Error;
    /// `const:VAL` or `linear:VAL`; tables are read by the caller.
    fn from_str(s: &str) -> Result<Self> {
        let value = |a: &str| {
            a.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("shift '{s}': bad value")))
        };
        match s.split_once(':') {
            Some(("const", a)) => Ok(Self::Const(value(a)?)),
            Some(("linear", a)) => Ok(Self::Linear(value(a)?)),
            _ => Err(usage(format!("unknown shift '{s}' (expected const:VAL, linear:VAL or table:FILE)"))),
        }
    }
}

/// `½ Σ_j u_j² Δ`.
pub fn relative_entropy(shift: &DriftShift) -> f64 {
    let dt = shift.grid.dt();
    let sq: Vec<f64> = shift.values.iter().map(|u| u * u * dt).collect();
    0.5 * pairwise_sum(&sq)
}

/// `X` driven by `dW + uΔ` and `Y` driven by `dW`.
pub fn coupled_paths(
    model: &dyn CoefficientModel,
    x0: f64,
    shift: &DriftShift,
    dw: &WienerIncrements,
    weights: &KernelWeights,
) -> Result<(SolutionPath, SolutionPath)> {
    dw.grid.ensure_same(&shift.grid)?;
    let y = solve_volterra(model, x0, dw, weights)?;
    if shift.is_zero() {
        return Ok((y.clone(), y));
    }
    let dt = dw.grid.dt();
    let shifted: Vec<f64> = dw.dw.iter().zip(&shift.values).map(|(w, u)| w + u * dt).collect();
    let x = solve_volterra(model, x0, &WienerIncrements { dw: shifted, ..dw.clone() }, weights)?;
    Ok((x, y))
}

/// Free parameter of the maximal-inequality constant; must lie in
/// `(0, 1/2)` with `H > (1 + θ)/2`.
pub fn default_theta(hurst: f64) -> f64 {
    (hurst - 0.5).clamp(f64::MIN_POSITIVE, 0.5 - f64::EPSILON)
}

fn require_long_memory(hurst: f64) -> Result<()> {
    if hurst > 0.5 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!(
            "transportation and maximal inequalities are only established for H > 1/2, got H = {hurst}"
        )))
    }
}

/// `C(p)` of the maximal inequality
/// `E sup_t |∫_0^t K_H(t,s)φ_s dW_s|^p <= C(p) E∫_0^T |φ_t|^p dt`:
///
/// `ᾱ_H^p ((p-1)/(θp))^{p-1} ((H+1/2-θ)p + 2H - 3)^{-p/2} T^{(H+1/2-θ)p²/2 + (H-1/2)p - 1}`
/// with `ᾱ_H = α_H (H - 1/2)`.
pub fn maximal_constant(hurst: f64, horizon: f64, p: f64, theta: f64) -> Result<f64> {
    require_long_memory(hurst)?;
    if !(p >= 2.0) {
        return Err(domain(format!("maximal inequality needs p >= 2, got {p}")));
    }
    if !(theta > 0.0 && theta < 0.5 && hurst > (1.0 + theta) / 2.0) {
        return Err(domain(format!("theta = {theta} must lie in (0, 1/2) with H > (1 + theta)/2")));
    }
    let alpha_bar = KernelConstants::new(hurst)?
        .alpha_bar_h
        .ok_or_else(|| Error::Numerical("missing long-memory kernel constant".into()))?;
    let a = hurst + 0.5 - theta;
    let denom = a * p + 2.0 * hurst - 3.0;
    Ok(alpha_bar.powf(p)
        * ((p - 1.0) / (theta * p)).powf(p - 1.0)
        * denom.powf(-p / 2.0)
        * horizon.powf(a * p * p / 2.0 + (hurst - 0.5) * p - 1.0))
}

/// Constants of the transportation inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransportConstants {
    pub hurst: f64,
    pub horizon: f64,
    pub theta: f64,
    pub c2: f64,
    /// `3(‖σ‖T^H)² exp[3K₆²T(T^{2H} + C(2))]`
    pub alpha: f64,
    /// `3(‖σ‖T^H)² (exp[3K₆²T(T^{2H} + C(2))] - 1)/(3K₆²(T^{2H} + C(2)))`
    pub beta: f64,
}

impl TransportConstants {
    pub fn new(hurst: f64, horizon: f64, k6: f64, sigma_sup: f64, theta: f64) -> Result<Self> {
        let c2 = maximal_constant(hurst, horizon, 2.0, theta)?;
        let t = horizon;
        let lead = 3.0 * (sigma_sup * t.powf(hurst)).powi(2);
        let rate = 3.0 * k6 * k6 * (t.powf(2.0 * hurst) + c2);
        let alpha = lead * (rate * t).exp();
        // (e^{rate·T} - 1)/rate → T as rate → 0
        let beta = if rate > 0.0 { lead * (rate * t).exp_m1() / rate } else { lead * t };
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Config("transportation constants overflow".into()));
        }
        Ok(Self { hurst, horizon, theta, c2, alpha, beta })
    }
}

/// Path-space metric of the transportation inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    /// `sup_t |x - y|`
    Uniform,
    /// `(∫|x - y|² dt)^{1/2}`
    L2,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "l2" | "L2" => Ok(Self::L2),
            _ => Err(usage(format!("unknown metric '{s}' (expected uniform or l2)"))),
        }
    }
}

impl Metric {
    /// Squared distance between two paths on the grid nodes (right-point rule
    /// for the integral).
    pub fn distance_sq(&self, x: &SolutionPath, y: &SolutionPath) -> f64 {
        let d2 = x.values.iter().zip(&y.values).map(|(a, b)| (a - b) * (a - b));
        match self {
            Self::Uniform => d2.fold(0.0, f64::max),
            Self::L2 => {
                let dt = x.grid.dt();
                let v: Vec<f64> = d2.skip(1).map(|v| v * dt).collect();
                pairwise_sum(&v)
            }
        }
    }
}

/// `E d(X, Y)² <= 2 C H(Q|P)` with `C = α` (uniform) or `β` (L²).
pub fn check_t2(
    model: &dyn CoefficientModel,
    x0: f64,
    shift: &ShiftSpec,
    metric: Metric,
    cfg: McConfig,
    theta: Option<f64>,
) -> Result<CheckReport> {
    require_long_memory(cfg.hurst)?;
    let ens = Ensemble::new(model, cfg)?;
    let grid = *ens.grid();
    let u = shift.on_grid(grid);
    let bounds = model.bounds();
    let theta = theta.unwrap_or_else(|| default_theta(cfg.hurst));
    let consts = TransportConstants::new(cfg.hurst, cfg.horizon, bounds.k6, bounds.sigma_sup, theta)?;
    let entropy = relative_entropy(&u);
    let dist: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|k| {
            let (x, y) = coupled_paths(model, x0, &u, &ens.noise(k), ens.weights())?;
            Ok(metric.distance_sq(&x, &y))
        })
        .collect::<Result<_>>()?;
    let c = match metric {
        Metric::Uniform => consts.alpha,
        Metric::L2 => consts.beta,
    };
    let name = match metric {
        Metric::Uniform => "T2 uniform",
        Metric::L2 => "T2 L2",
    };
    let rhs = 2.0 * c * entropy;
    let report = if u.is_zero() {
        CheckReport::exact(name, mean(&dist), rhs)
    } else {
        let se = std_error(&dist);
        CheckReport::statistical(name, (mean(&dist), se), (rhs, 0.0), se, 0.0)
    };
    Ok(report
        .with_constant("alpha", consts.alpha)
        .with_constant("beta", consts.beta)
        .with_constant("C(2)", consts.c2)
        .with_constant("theta", consts.theta)
        .with_constant("entropy", entropy))
}

/// Deterministic test processes for the maximal inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PhiSpec {
    Const(f64),
    /// `φ(t) = t`
    Linear,
}

impl PhiSpec {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Linear => t,
        }
    }
}

impl FromStr for PhiSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(Self::Linear);
        }
        match s.split_once(':') {
            Some(("const", a)) => a
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Self::Const)
                .ok_or_else(|| usage(format!("phi '{s}': bad value"))),
            _ => Err(usage(format!("unknown phi '{s}' (expected const:VAL or linear)"))),
        }
    }
}

/// `E sup_i |Σ_j (w[i][j]/Δ) φ_j dW_j|^p <= C(p) Σ_j |φ_j|^p Δ`, with `φ`
/// evaluated at the left end of each cell.
pub fn check_maximal_inequality(phi: PhiSpec, p: f64, cfg: McConfig, theta: Option<f64>) -> Result<CheckReport> {
    require_long_memory(cfg.hurst)?;
    let theta = theta.unwrap_or_else(|| default_theta(cfg.hurst));
    let c = maximal_constant(cfg.hurst, cfg.horizon, p, theta)?;
    let model = crate::solver::ZeroDriftModel;
    let ens = Ensemble::new(&model, cfg)?;
    let grid = *ens.grid();
    let phis: Vec<f64> = (0..grid.steps()).map(|j| phi.eval(grid.t(j))).collect();
    let sups: Vec<f64> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|k| {
            let mut dw = ens.noise(k);
            for (w, f) in dw.dw.iter_mut().zip(&phis) {
                *w *= f;
            }
            let path = fbm_from_wiener(&dw, ens.weights())?;
            Ok(path.values.iter().map(|v| v.abs().powf(p)).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let moment: Vec<f64> = phis.iter().map(|f| f.abs().powf(p) * grid.dt()).collect();
    let rhs = c * pairwise_sum(&moment);
    let name = format!("maximal p={p}");
    let report = if phis.iter().all(|&f| f == 0.0) {
        CheckReport::exact(name, mean(&sups), rhs)
    } else {
        let se = std_error(&sups);
        CheckReport::statistical(name, (mean(&sups), se), (rhs, 0.0), se, 0.0)
    };
    Ok(report.with_constant("C(p)", c).with_constant("theta", theta).with_constant("p", p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_weights;
    use crate::noise::sample_wiener;
    use crate::solver::{OuModel, ZeroDriftModel};

    #[test]
    fn entropy_values() {
        let g = TimeGrid::new(1.0, 1000).unwrap();
        assert_eq!(relative_entropy(&DriftShift::zero(g)), 0.0);
        assert!((relative_entropy(&DriftShift::from_fn(g, |_| 1.0)) - 0.5).abs() < 1e-12);
        assert!((relative_entropy(&DriftShift::from_fn(g, |t| t)) - 1.0 / 6.0).abs() < 1e-6);
        let a = DriftShift::from_fn(g, |t| t.sin());
        let b = DriftShift::from_fn(g, |t| -t.sin());
        assert_eq!(relative_entropy(&a), relative_entropy(&b));
    }

    #[test]
    fn zero_shift_collapses() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let w = build_weights(g, 0.7).unwrap();
        let (x, y) = coupled_paths(&OuModel { theta: 1.0 }, 0.3, &DriftShift::zero(g), &sample_wiener(g, 1, 0), &w).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn additive_difference_is_deterministic() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let w = build_weights(g, 0.7).unwrap();
        let u = DriftShift::from_fn(g, |_| 1.0);
        let expect: Vec<f64> = (0..g.nodes()).map(|i| w.row_dot(i, &u.values)).collect();
        for k in 0..3 {
            let (x, y) = coupled_paths(&ZeroDriftModel, 0.0, &u, &sample_wiener(g, 2, k), &w).unwrap();
            for i in 0..g.nodes() {
                assert!((x.values[i] - y.values[i] - expect[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transport_constants() {
        let c = TransportConstants::new(0.7, 1.0, 1.0, 1.0, default_theta(0.7)).unwrap();
        assert!(c.alpha > 0.0 && c.beta > 0.0);
        assert!(c.beta <= c.alpha * 1.0);
        let z = TransportConstants::new(0.7, 2.0, 0.0, 1.0, 0.1).unwrap();
        assert!((z.beta - 2.0 * z.alpha).abs() < 1e-12 * z.alpha);
    }

    #[test]
    fn maximal_constant_by_hand() {
        // H = 3/4, θ = 1/4, p = 2: ᾱ² · 2 · 2
        let kc = KernelConstants::new(0.75).unwrap();
        let c = maximal_constant(0.75, 1.0, 2.0, 0.25).unwrap();
        assert!((c - 4.0 * kc.alpha_bar_h.unwrap().powi(2)).abs() < 1e-12);
        assert!(matches!(maximal_constant(0.5, 1.0, 2.0, 0.1), Err(Error::Hypothesis(_))));
        assert!(matches!(maximal_constant(0.6, 1.0, 2.0, 0.3), Err(Error::Domain(_))));
        assert!(matches!(maximal_constant(0.7, 1.0, 1.5, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn hypothesis_refused() {
        let cfg = McConfig { hurst: 0.4, horizon: 1.0, steps: 16, paths: 100, seed: 1 };
        let r = check_t2(&ZeroDriftModel, 0.0, &ShiftSpec::Const(1.0), Metric::Uniform, cfg, None);
        assert!(matches!(r, Err(Error::Hypothesis(_))));
    }

    #[test]
    fn zero_phi_is_exact() {
        let cfg = McConfig { hurst: 0.7, horizon: 1.0, steps: 32, paths: 100, seed: 1 };
        let r = check_maximal_inequality(PhiSpec::Const(0.0), 2.0, cfg, None).unwrap();
        assert!(r.exact && r.pass);
        assert_eq!(r.lhs, 0.0);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("const:0.5".parse::<ShiftSpec>().unwrap(), ShiftSpec::Const(0.5));
        assert_eq!("linear:2".parse::<ShiftSpec>().unwrap().eval(0.25), 0.5);
        assert!("wave".parse::<ShiftSpec>().is_err());
        assert_eq!("linear".parse::<PhiSpec>().unwrap(), PhiSpec::Linear);
        assert_eq!("uniform".parse::<Metric>().unwrap(), Metric::Uniform);
        let t = ShiftSpec::parse_table("t,u\n0,0\n1,2\n").unwrap();
        assert!((t.eval(0.5) - 1.0).abs() < 1e-15);
    }
}
