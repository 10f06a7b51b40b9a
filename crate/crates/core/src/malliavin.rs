//! Monte Carlo estimators of `P_T f(x) = E f(X_T^x)` and of its derivatives
//! through stochastic weights.
//!
//! Both weights are discrete Itô sums `M = Σ_j ξ_j dW_j` with adapted
//! integrands. On the grid they are exact Gaussian integration-by-parts
//! identities for the scheme of [`crate::solver`]:
//!
//! * Bismut (derivative in the initial point): `ξ_j = σ_j^{-1} ((1 + U_j) ∂b_j - v_j) y`
//!   where `v_j` is the control `u'` per cell and `U_i = Σ_{j<i} w[i][j] v_j`;
//!   the estimate is unbiased up to the residual `1 + U_n`.
//! * Shift (derivative of the test function): `ξ_j = σ_j^{-1} (C_H ψ_j - t_j ∂b_j) y / T`
//!   with `ψ_j` the cell value of `s^{1/2-H}`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::grid::TimeGrid;
use crate::inequalities::HarnackConstants;
use crate::kernel::{build_weights, check_hurst, KernelConstants, KernelWeights};
use crate::noise::{sample_wiener, WienerIncrements};
use crate::report::{Agreement, CheckReport};
use crate::solver::{solve_variational, solve_volterra, CoefficientModel, SolutionPath};
use crate::stats::{delta_method_se, mean, pairwise_sum, std_error};

/// Largest admissible `|1 + Σ_j w[n][j] v_j|`.
pub const CONTROL_GATE: f64 = 1e-3;
/// Smallest ensemble accepted by the estimators.
pub const MIN_PATHS: usize = 100;

/// Test functions `f` with their derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TestFunction {
    /// `z`
    Id,
    /// `z²`
    Square,
    /// `sin z`
    Sin,
    /// `exp(min(z, 2))`
    ExpClamped,
    /// constant `c`
    Const(f64),
    /// `2 + sin z`
    TwoPlusSin,
    /// `exp(1 - 1/(1 - z²))` on `|z| < 1`, zero outside
    Bump,
    /// indicator of `z >= a`
    Step(f64),
    /// `1 + exp(-z²)`
    OnePlusGauss,
}

const EXP_CLAMP: f64 = 2.0;

impl TestFunction {
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            Self::Id => z,
            Self::Square => z * z,
            Self::Sin => z.sin(),
            Self::ExpClamped => z.min(EXP_CLAMP).exp(),
            Self::Const(c) => c,
            Self::TwoPlusSin => 2.0 + z.sin(),
            Self::Bump => {
                if z.abs() < 1.0 {
                    (1.0 - 1.0 / (1.0 - z * z)).exp()
                } else {
                    0.0
                }
            }
            Self::Step(a) => {
                if z >= a {
                    1.0
                } else {
                    0.0
                }
            }
            Self::OnePlusGauss => 1.0 + (-z * z).exp(),
        }
    }

    /// Derivative (zero at the kinks of the clamped and step functions).
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Self::Id => 1.0,
            Self::Square => 2.0 * z,
            Self::Sin => z.cos(),
            Self::ExpClamped => {
                if z < EXP_CLAMP {
                    z.exp()
                } else {
                    0.0
                }
            }
            Self::Const(_) | Self::Step(_) => 0.0,
            Self::TwoPlusSin => z.cos(),
            Self::Bump => {
                if z.abs() < 1.0 {
                    let q = 1.0 - z * z;
                    self.value(z) * (-2.0 * z / (q * q))
                } else {
                    0.0
                }
            }
            Self::OnePlusGauss => -2.0 * z * (-z * z).exp(),
        }
    }

    /// `inf f`, when finite.
    pub fn infimum(&self) -> Option<f64> {
        match *self {
            Self::Id => None,
            Self::Square | Self::ExpClamped | Self::Bump | Self::Step(_) => Some(0.0),
            Self::Sin => Some(-1.0),
            Self::Const(c) => Some(c),
            Self::TwoPlusSin | Self::OnePlusGauss => Some(1.0),
        }
    }

    /// `sup |f|`, when finite.
    pub fn sup_norm(&self) -> Option<f64> {
        match *self {
            Self::Id | Self::Square => None,
            Self::Sin | Self::Bump | Self::Step(_) => Some(1.0),
            Self::ExpClamped => Some(EXP_CLAMP.exp()),
            Self::Const(c) => Some(c.abs()),
            Self::TwoPlusSin => Some(3.0),
            Self::OnePlusGauss => Some(2.0),
        }
    }

    /// `f > 0` everywhere.
    pub fn is_positive(&self) -> bool {
        match *self {
            Self::ExpClamped => true,
            _ => self.infimum().is_some_and(|m| m > 0.0),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Id => write!(f, "id"),
            Self::Square => write!(f, "square"),
            Self::Sin => write!(f, "sin"),
            Self::ExpClamped => write!(f, "exp-clamped"),
            Self::Const(c) => write!(f, "const:{c}"),
            Self::TwoPlusSin => write!(f, "2+sin"),
            Self::Bump => write!(f, "bump"),
            Self::Step(a) => write!(f, "step:{a}"),
            Self::OnePlusGauss => write!(f, "1+gauss"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let number = |a: &str| {
            a.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("test function '{s}': bad parameter")))
        };
        match s {
            "id" => Ok(Self::Id),
            "square" => Ok(Self::Square),
            "sin" => Ok(Self::Sin),
            "exp-clamped" => Ok(Self::ExpClamped),
            "2+sin" => Ok(Self::TwoPlusSin),
            "bump" => Ok(Self::Bump),
            "1+gauss" => Ok(Self::OnePlusGauss),
            _ => match s.split_once(':') {
                Some(("const", a)) => Ok(Self::Const(number(a)?)),
                Some(("step", a)) => Ok(Self::Step(number(a)?)),
                _ => Err(usage(format!("unknown test function '{s}'"))),
            },
        }
    }
}

/// Control `u'` entering the Bismut weight.
#[derive(Clone)]
pub enum ControlFunction {
    /// `u'(t) = -(C_H/T) t^{1/2-H}`.
    Default,
    /// Linear interpolation of `(t, u')` samples, constant beyond the ends.
    Table { t: Vec<f64>, u: Vec<f64> },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ControlFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Default => write!(f, "Default"),
            Self::Table { t, .. } => write!(f, "Table({} points)", t.len()),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ControlFunction {
    /// Parses `t,u'` rows (header and `#` comments allowed).
    pub fn parse_table(text: &str) -> Result<Self> {
        let (mut t, mut u) = (Vec::new(), Vec::new());
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 2 && v.iter().all(|x| x.is_finite()) => {
                    t.push(v[0]);
                    u.push(v[1]);
                }
                Err(_) if t.is_empty() && ln == 0 => continue,
                _ => return Err(usage(format!("control table: bad row {}: '{line}'", ln + 1))),
            }
        }
        if t.len() < 2 || t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(usage("control table needs at least two rows with increasing t"));
        }
        Ok(Self::Table { t, u })
    }

    pub fn uprime(&self, s: f64, c_h: f64, hurst: f64, horizon: f64) -> f64 {
        match self {
            Self::Default => -(c_h / horizon) * s.powf(0.5 - hurst),
            Self::Table { t, u } => {
                let n = t.len();
                if s <= t[0] {
                    return u[0];
                }
                if s >= t[n - 1] {
                    return u[n - 1];
                }
                let k = t.partition_point(|&v| v <= s) - 1;
                let a = (s - t[k]) / (t[k + 1] - t[k]);
                u[k] + a * (u[k + 1] - u[k])
            }
            Self::Custom(g) => g(s),
        }
    }
}

/// A control resolved on a grid: per-cell values `v_j`, the deterministic
/// sums `U_i = Σ_{j<i} w[i][j] v_j` and the normalisation residual `1 + U_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteControl {
    pub v: Vec<f64>,
    pub accumulated: Vec<f64>,
    pub residual: f64,
}

impl DiscreteControl {
    /// Resolves `ctrl`, failing with a configuration error when
    /// `|1 + U_n| > 1e-3`.
    pub fn new(ctrl: &ControlFunction, weights: &KernelWeights, c_h: f64) -> Result<Self> {
        let grid = *weights.grid();
        let (hurst, horizon) = (weights.hurst(), grid.horizon());
        let v = weights.cell_values(|s| ctrl.uprime(s, c_h, hurst, horizon));
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("control is not finite on the grid".into()));
        }
        let accumulated: Vec<f64> = (0..grid.nodes()).map(|i| weights.row_dot(i, &v)).collect();
        let residual = 1.0 + accumulated[grid.steps()];
        if !(residual.abs() <= CONTROL_GATE) {
            return Err(Error::Config(format!(
                "control violates the normalisation 1 + ∫K(T,r)u'(r)dr = 0: residual {residual:.3e}"
            )));
        }
        Ok(Self { v, accumulated, residual })
    }
}

/// Ensemble size and grid of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub hurst: f64,
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn validate(&self) -> Result<TimeGrid> {
        check_hurst(self.hurst)?;
        if self.steps < 2 {
            return Err(usage(format!("need at least 2 steps, got {}", self.steps)));
        }
        if self.paths < MIN_PATHS {
            return Err(usage(format!("need at least {MIN_PATHS} paths, got {}", self.paths)));
        }
        TimeGrid::new(self.horizon, self.steps)
    }
}

/// Sample mean of `f(X_T)·weight` with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub paths: usize,
    /// Sample mean of the squared weight.
    pub weight_second_moment: f64,
}

impl WeightedEstimate {
    pub fn from_products(products: &[f64], weights: &[f64]) -> Self {
        let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
        Self {
            value: mean(products),
            std_error: std_error(products),
            paths: products.len(),
            weight_second_moment: mean(&sq),
        }
    }

    pub fn pair(&self) -> (f64, f64) {
        (self.value, self.std_error)
    }
}

/// What [`Ensemble::samples`] computes alongside `X_T`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleRequest<'c> {
    pub y: f64,
    pub bismut: Option<&'c DiscreteControl>,
    pub ibp: bool,
    pub tangent: bool,
    pub fd_eps: Option<f64>,
}

/// Per-path outputs; quantities that were not requested are NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSample {
    pub x_t: f64,
    pub bismut_weight: f64,
    pub ibp_weight: f64,
    /// `∇_y X_T`
    pub tangent: f64,
    pub fd_plus: f64,
    pub fd_minus: f64,
}

/// A model together with the grid, weights and constants of one
/// configuration. Path `k` always uses Wiener stream `(seed, k)`, so every
/// quantity computed from the same ensemble shares its random numbers.
#[derive(Debug, Clone)]
pub struct Ensemble<'m> {
    model: &'m dyn CoefficientModel,
    cfg: McConfig,
    weights: Arc<KernelWeights>,
    constants: KernelConstants,
    terminal_cache: Arc<Mutex<HashMap<u64, Arc<Vec<f64>>>>>,
}

impl<'m> Ensemble<'m> {
    pub fn new(model: &'m dyn CoefficientModel, cfg: McConfig) -> Result<Self> {
        let grid = cfg.validate()?;
        let weights = build_weights(grid, cfg.hurst)?;
        let constants = KernelConstants::new(cfg.hurst)?;
        Ok(Self { model, cfg, weights, constants, terminal_cache: Arc::default() })
    }

    pub fn model(&self) -> &dyn CoefficientModel {
        self.model
    }

    pub fn config(&self) -> &McConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &TimeGrid {
        self.weights.grid()
    }

    pub fn weights(&self) -> &KernelWeights {
        &self.weights
    }

    pub fn constants(&self) -> &KernelConstants {
        &self.constants
    }

    pub fn noise(&self, path_index: u64) -> WienerIncrements {
        sample_wiener(*self.grid(), self.cfg.seed, path_index)
    }

    pub fn path(&self, x0: f64, path_index: u64) -> Result<(WienerIncrements, SolutionPath)> {
        let dw = self.noise(path_index);
        let x = solve_volterra(self.model, x0, &dw, &self.weights)?;
        Ok((dw, x))
    }

    /// `X_T` for every path, in path order. Results are memoised per
    /// starting point.
    pub fn terminal_values(&self, x0: f64) -> Result<Arc<Vec<f64>>> {
        let key = x0.to_bits();
        if let Some(v) = self.terminal_cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(v));
        }
        let v: Vec<f64> = (0..self.cfg.paths as u64)
            .into_par_iter()
            .map(|k| self.path(x0, k).map(|(_, x)| x.terminal()))
            .collect::<Result<_>>()?;
        let v = Arc::new(v);
        self.terminal_cache.lock().expect("cache lock").insert(key, Arc::clone(&v));
        Ok(v)
    }

    fn require_additive(&self) -> Result<()> {
        if self.model.is_additive() {
            Ok(())
        } else {
            Err(usage(format!(
                "gradient weights need additive noise; model '{}' is not",
                self.model.name()
            )))
        }
    }

    /// Per-path terminal values with the requested weights.
    pub fn samples(&self, x0: f64, req: &SampleRequest<'_>) -> Result<Vec<PathSample>> {
        if req.bismut.is_some() || req.ibp {
            self.require_additive()?;
        }
        let grid = *self.grid();
        let (hurst, horizon) = (self.cfg.hurst, grid.horizon());
        let psi = req.ibp.then(|| self.weights.cell_values(|s| s.powf(0.5 - hurst)));
        let c_h = self.constants.c_h;
        let m = self.model;
        (0..self.cfg.paths as u64)
            .into_par_iter()
            .map(|k| {
                let (dw, x) = self.path(x0, k)?;
                let mut out = PathSample {
                    x_t: x.terminal(),
                    bismut_weight: f64::NAN,
                    ibp_weight: f64::NAN,
                    tangent: f64::NAN,
                    fd_plus: f64::NAN,
                    fd_minus: f64::NAN,
                };
                if let Some(ctrl) = req.bismut {
                    let terms: Vec<f64> = (0..grid.steps())
                        .map(|j| {
                            let (t, xj) = (grid.t(j), x.values[j]);
                            let xi = ((1.0 + ctrl.accumulated[j]) * m.drift_dx(t, xj) - ctrl.v[j])
                                / m.diffusion(t, xj);
                            xi * dw.dw[j]
                        })
                        .collect();
                    out.bismut_weight = req.y * pairwise_sum(&terms);
                }
                if let Some(psi) = &psi {
                    let terms: Vec<f64> = (0..grid.steps())
                        .map(|j| {
                            let (t, xj) = (grid.t(j), x.values[j]);
                            (c_h * psi[j] - t * m.drift_dx(t, xj)) / m.diffusion(t, xj) * dw.dw[j]
                        })
                        .collect();
                    out.ibp_weight = req.y / horizon * pairwise_sum(&terms);
                }
                if req.tangent {
                    out.tangent = solve_variational(m, req.y, &dw, &self.weights, &x)?.terminal();
                }
                if let Some(eps) = req.fd_eps {
                    let up = solve_volterra(m, x0 + eps * req.y, &dw, &self.weights)?;
                    let down = solve_volterra(m, x0 - eps * req.y, &dw, &self.weights)?;
                    out.fd_plus = up.terminal();
                    out.fd_minus = down.terminal();
                }
                Ok(out)
            })
            .collect()
    }
}

/// `P_T f(x0)` as a plain sample mean.
pub fn estimate_ptf(
    model: &dyn CoefficientModel,
    x0: f64,
    f: TestFunction,
    cfg: McConfig,
) -> Result<WeightedEstimate> {
    let ens = Ensemble::new(model, cfg)?;
    let values: Vec<f64> = ens.terminal_values(x0)?.iter().map(|&x| f.value(x)).collect();
    Ok(WeightedEstimate::from_products(&values, &vec![1.0; values.len()]))
}

/// `∇_y P_T f(x0) = E[f(X_T) M]` with the Bismut weight for control `ctrl`.
pub fn bismut_gradient(
    model: &dyn CoefficientModel,
    x0: f64,
    y: f64,
    f: TestFunction,
    ctrl: &ControlFunction,
    cfg: McConfig,
) -> Result<WeightedEstimate> {
    let ens = Ensemble::new(model, cfg)?;
    let dc = DiscreteControl::new(ctrl, ens.weights(), ens.constants().c_h)?;
    let s = ens.samples(x0, &SampleRequest { y, bismut: Some(&dc), ..Default::default() })?;
    let w: Vec<f64> = s.iter().map(|p| p.bismut_weight).collect();
    let prod: Vec<f64> = s.iter().map(|p| f.value(p.x_t) * p.bismut_weight).collect();
    Ok(WeightedEstimate::from_products(&prod, &w))
}

/// `P_T(∇_y f)(x0) = E[f(X_T) M]` with the shift weight.
pub fn ibp_shift_gradient(
    model: &dyn CoefficientModel,
    x0: f64,
    y: f64,
    f: TestFunction,
    cfg: McConfig,
) -> Result<WeightedEstimate> {
    let ens = Ensemble::new(model, cfg)?;
    let s = ens.samples(x0, &SampleRequest { y, ibp: true, ..Default::default() })?;
    let w: Vec<f64> = s.iter().map(|p| p.ibp_weight).collect();
    let prod: Vec<f64> = s.iter().map(|p| f.value(p.x_t) * p.ibp_weight).collect();
    Ok(WeightedEstimate::from_products(&prod, &w))
}

/// Three estimates of `∇_y P_T f(x0)` on common paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientTriangle {
    pub bismut: WeightedEstimate,
    /// `E[f'(X_T) ∇_y X_T]`
    pub pathwise: WeightedEstimate,
    /// Central difference of `P_T f` in the initial point.
    pub finite_difference: WeightedEstimate,
    pub fd_eps: f64,
    pub control_residual: f64,
    pub agreements: Vec<Agreement>,
}

impl GradientTriangle {
    pub fn pass(&self) -> bool {
        self.agreements.iter().all(|a| a.pass)
    }
}

pub fn gradient_triangle(
    model: &dyn CoefficientModel,
    x0: f64,
    y: f64,
    f: TestFunction,
    ctrl: &ControlFunction,
    cfg: McConfig,
    fd_eps: f64,
) -> Result<GradientTriangle> {
    if !(fd_eps > 0.0) {
        return Err(domain("finite-difference step must be positive"));
    }
    let ens = Ensemble::new(model, cfg)?;
    let dc = DiscreteControl::new(ctrl, ens.weights(), ens.constants().c_h)?;
    let req = SampleRequest { y, bismut: Some(&dc), ibp: false, tangent: true, fd_eps: Some(fd_eps) };
    let s = ens.samples(x0, &req)?;
    let w: Vec<f64> = s.iter().map(|p| p.bismut_weight).collect();
    let b: Vec<f64> = s.iter().map(|p| f.value(p.x_t) * p.bismut_weight).collect();
    let pw: Vec<f64> = s.iter().map(|p| f.derivative(p.x_t) * p.tangent).collect();
    let fd: Vec<f64> = s.iter().map(|p| (f.value(p.fd_plus) - f.value(p.fd_minus)) / (2.0 * fd_eps)).collect();
    let ones = vec![1.0; s.len()];
    let bismut = WeightedEstimate::from_products(&b, &w);
    let pathwise = WeightedEstimate::from_products(&pw, &ones);
    let finite_difference = WeightedEstimate::from_products(&fd, &ones);
    let agreements = vec![
        Agreement::new("bismut", bismut.pair(), "pathwise", pathwise.pair()),
        Agreement::new("bismut", bismut.pair(), "finite-difference", finite_difference.pair()),
        Agreement::new("pathwise", pathwise.pair(), "finite-difference", finite_difference.pair()),
    ];
    Ok(GradientTriangle {
        bismut,
        pathwise,
        finite_difference,
        fd_eps,
        control_residual: dc.residual,
        agreements,
    })
}

/// Sample entropy `mean(f log f) - mean(f) log mean(f)` and the delta-method
/// gradient of a check `g = a·Ent + k·mean(f) - |lhs|` with respect to the
/// means `(lhs, f log f, f)`.
pub(crate) struct EntropyColumns {
    pub f: Vec<f64>,
    pub flogf: Vec<f64>,
    pub mean_f: f64,
    pub mean_flogf: f64,
}

impl EntropyColumns {
    pub fn new(values: Vec<f64>) -> Self {
        let flogf: Vec<f64> = values.iter().map(|v| v * v.ln()).collect();
        let mean_f = mean(&values);
        let mean_flogf = mean(&flogf);
        Self { f: values, flogf, mean_f, mean_flogf }
    }

    pub fn entropy(&self) -> f64 {
        self.mean_flogf - self.mean_f * self.mean_f.ln()
    }

    /// Report for `|mean(lhs)| <= a·Ent + k·mean(f)`; exact (Jensen on the
    /// shared sample) when `lhs` is identically zero.
    pub fn check(&self, name: &str, lhs: &[f64], a: f64, k: f64, tol: f64) -> CheckReport {
        let m1 = mean(lhs);
        let rhs = a * self.entropy() + k * self.mean_f;
        if lhs.iter().all(|&v| v == 0.0) {
            return CheckReport::exact(name, 0.0, rhs);
        }
        let lhs_se = std_error(lhs);
        let rhs_se = delta_method_se(&[&self.flogf, &self.f], &[a, -a * (self.mean_f.ln() + 1.0) + k]);
        let diff_se = delta_method_se(
            &[lhs, &self.flogf, &self.f],
            &[-m1.signum(), a, -a * (self.mean_f.ln() + 1.0) + k],
        );
        CheckReport::statistical(name, (m1.abs(), lhs_se), (rhs, rhs_se), diff_se, tol)
    }
}

/// `|P_T(∇_y f)| <= α[P_T(f log f) - P_T f log P_T f] + (K₂² y² S / α) P_T f`
/// for positive `f`, where `S` is the shift constant of
/// [`HarnackConstants`]. The left side is the sample mean of `f'(X_T)·y`.
pub fn entropy_gradient_bound_check(
    model: &dyn CoefficientModel,
    x0: f64,
    y: f64,
    f: TestFunction,
    alpha: f64,
    cfg: McConfig,
) -> Result<CheckReport> {
    if !f.is_positive() {
        return Err(domain(format!("entropy bound needs a positive test function, got '{f}'")));
    }
    if !(alpha > 0.0) {
        return Err(domain(format!("alpha must be positive, got {alpha}")));
    }
    let ens = Ensemble::new(model, cfg)?;
    let consts = HarnackConstants::new(ens.constants().c_h, cfg.hurst, cfg.horizon, &model.bounds());
    let xt = ens.terminal_values(x0)?;
    let lhs: Vec<f64> = xt.iter().map(|&x| f.derivative(x) * y).collect();
    let cols = EntropyColumns::new(xt.iter().map(|&x| f.value(x)).collect());
    let k = consts.shift_log * y * y / alpha;
    Ok(cols
        .check("entropy-gradient (shift)", &lhs, alpha, k, 0.0)
        .with_constant("alpha", alpha)
        .with_constant("K2^2*S", consts.shift_log)
        .with_constant("C_H", consts.c_h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{LinearModel, TrigModel, ZeroDriftModel};

    fn cfg(hurst: f64, paths: usize) -> McConfig {
        McConfig { hurst, horizon: 1.0, steps: 64, paths, seed: 9 }
    }

    #[test]
    fn test_function_parse_roundtrip() {
        for s in ["id", "square", "sin", "exp-clamped", "const:2.5", "2+sin", "bump", "step:0.1", "1+gauss"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("cos".parse::<TestFunction>().is_err());
        assert!("const:x".parse::<TestFunction>().is_err());
    }

    #[test]
    fn test_function_derivatives() {
        let fs = [
            TestFunction::Id,
            TestFunction::Square,
            TestFunction::Sin,
            TestFunction::ExpClamped,
            TestFunction::TwoPlusSin,
            TestFunction::Bump,
            TestFunction::OnePlusGauss,
        ];
        for f in fs {
            for &z in &[-0.7, -0.2, 0.3, 0.9, 1.4] {
                let h = 1e-6;
                let fd = (f.value(z + h) - f.value(z - h)) / (2.0 * h);
                assert!((fd - f.derivative(z)).abs() < 1e-6, "{f} at {z}");
            }
        }
        assert!(TestFunction::ExpClamped.is_positive());
        assert!(!TestFunction::Bump.is_positive());
        assert!(!TestFunction::Const(0.0).is_positive());
    }

    #[test]
    fn constant_function_estimates() {
        let e = estimate_ptf(&LinearModel { kappa: 0.5 }, 0.2, TestFunction::Const(3.0), cfg(0.7, 200)).unwrap();
        assert_eq!(e.value, 3.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn default_control_passes_gate() {
        for &h in &[0.3, 0.5, 0.7] {
            let g = TimeGrid::new(1.0, 128).unwrap();
            let w = build_weights(g, h).unwrap();
            let c = KernelConstants::new(h).unwrap();
            let dc = DiscreteControl::new(&ControlFunction::Default, &w, c.c_h).unwrap();
            assert!(dc.residual.abs() < CONTROL_GATE, "H={h}: {}", dc.residual);
        }
    }

    #[test]
    fn bad_control_rejected() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let w = build_weights(g, 0.7).unwrap();
        let zero = ControlFunction::Custom(Arc::new(|_| 0.0));
        assert!(matches!(DiscreteControl::new(&zero, &w, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn weights_are_linear_in_y() {
        let m = LinearModel { kappa: 0.5 };
        let ens = Ensemble::new(&m, cfg(0.7, 100)).unwrap();
        let dc = DiscreteControl::new(&ControlFunction::Default, ens.weights(), ens.constants().c_h).unwrap();
        let a = ens.samples(0.1, &SampleRequest { y: 1.0, bismut: Some(&dc), ibp: true, ..Default::default() }).unwrap();
        let b = ens.samples(0.1, &SampleRequest { y: 2.0, bismut: Some(&dc), ibp: true, ..Default::default() }).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(2.0 * p.bismut_weight, q.bismut_weight);
            assert_eq!(2.0 * p.ibp_weight, q.ibp_weight);
        }
        let z = ibp_shift_gradient(&m, 0.1, 0.0, TestFunction::Sin, cfg(0.7, 100)).unwrap();
        assert_eq!(z.value, 0.0);
        assert_eq!(z.std_error, 0.0);
    }

    #[test]
    fn multiplicative_noise_rejected() {
        let r = bismut_gradient(&TrigModel, 0.0, 1.0, TestFunction::Id, &ControlFunction::Default, cfg(0.5, 100));
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn brownian_identity_gradient() {
        let e = bismut_gradient(&ZeroDriftModel, 0.3, 1.0, TestFunction::Id, &ControlFunction::Default, cfg(0.5, 4000))
            .unwrap();
        assert!((e.value - 1.0).abs() < 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn control_table_parse() {
        let c = ControlFunction::parse_table("t,u\n0,-1\n1,-1\n").unwrap();
        assert_eq!(c.uprime(0.4, 0.0, 0.5, 1.0), -1.0);
        assert!(ControlFunction::parse_table("0,1\n").is_err());
    }
}
