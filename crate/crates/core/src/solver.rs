//! Coefficient models and the left-point Volterra scheme
//!
//! ```text
//! X_i = x0 + Σ_{j<i} w[i][j] b(t_j, X_j) + Σ_{j<i} (w[i][j]/Δ) σ(t_j, X_j) dW_j
//! ```
//!
//! together with its variational (tangent) equation.

use std::fmt::Debug;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::KernelWeights;
use crate::noise::WienerIncrements;

/// Constants bounding a coefficient model.
///
/// `k1`: `|∂b| <= K₁`; `k2`: `|σ^{-1}| <= K₂`; `k5 <= |σ^{-1}| <= k4` and
/// `|∂b| <= k3` for the gradient estimates; `k6`: joint Lipschitz constant of
/// `(b, σ)`; `sigma_sup`: `sup |σ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelBounds {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub sigma_sup: f64,
}

/// One-dimensional coefficients `b(t,x)`, `σ(t,x)` with their spatial
/// derivatives.
pub trait CoefficientModel: Debug + Send + Sync {
    /// Short spec string, e.g. `linear:0.5`.
    fn name(&self) -> String;
    fn drift(&self, t: f64, x: f64) -> f64;
    fn diffusion(&self, t: f64, x: f64) -> f64;
    fn drift_dx(&self, t: f64, x: f64) -> f64;
    fn diffusion_dx(&self, t: f64, x: f64) -> f64;
    /// Whether `σ` depends on time only.
    fn is_additive(&self) -> bool;
    fn bounds(&self) -> ModelBounds;
}

fn unit_noise_bounds(lipschitz: f64) -> ModelBounds {
    let k = lipschitz.abs();
    ModelBounds { k1: k, k2: 1.0, k3: k, k4: 1.0, k5: 1.0, k6: k, sigma_sup: 1.0 }
}

/// `b = κx`, `σ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub kappa: f64,
}

impl CoefficientModel for LinearModel {
    fn name(&self) -> String {
        format!("linear:{}", self.kappa)
    }
    fn drift(&self, _t: f64, x: f64) -> f64 {
        self.kappa * x
    }
    fn diffusion(&self, _t: f64, _x: f64) -> f64 {
        1.0
    }
    fn drift_dx(&self, _t: f64, _x: f64) -> f64 {
        self.kappa
    }
    fn diffusion_dx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn is_additive(&self) -> bool {
        true
    }
    fn bounds(&self) -> ModelBounds {
        unit_noise_bounds(self.kappa)
    }
}

/// Ornstein–Uhlenbeck drift `b = -θx`, `σ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuModel {
    pub theta: f64,
}

impl CoefficientModel for OuModel {
    fn name(&self) -> String {
        format!("ou:{}", self.theta)
    }
    fn drift(&self, _t: f64, x: f64) -> f64 {
        -self.theta * x
    }
    fn diffusion(&self, _t: f64, _x: f64) -> f64 {
        1.0
    }
    fn drift_dx(&self, _t: f64, _x: f64) -> f64 {
        -self.theta
    }
    fn diffusion_dx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn is_additive(&self) -> bool {
        true
    }
    fn bounds(&self) -> ModelBounds {
        unit_noise_bounds(self.theta)
    }
}

/// `b = 0`, `σ = 1`: the solution is `x0 + B^H`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZeroDriftModel;

impl CoefficientModel for ZeroDriftModel {
    fn name(&self) -> String {
        "zero".into()
    }
    fn drift(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn diffusion(&self, _t: f64, _x: f64) -> f64 {
        1.0
    }
    fn drift_dx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn diffusion_dx(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }
    fn is_additive(&self) -> bool {
        true
    }
    fn bounds(&self) -> ModelBounds {
        unit_noise_bounds(0.0)
    }
}

/// `b = sin x`, `σ = 1 + cos(x)/2` (multiplicative noise).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrigModel;

impl CoefficientModel for TrigModel {
    fn name(&self) -> String {
        "trig".into()
    }
    fn drift(&self, _t: f64, x: f64) -> f64 {
        x.sin()
    }
    fn diffusion(&self, _t: f64, x: f64) -> f64 {
        1.0 + 0.5 * x.cos()
    }
    fn drift_dx(&self, _t: f64, x: f64) -> f64 {
        x.cos()
    }
    fn diffusion_dx(&self, _t: f64, x: f64) -> f64 {
        -0.5 * x.sin()
    }
    fn is_additive(&self) -> bool {
        false
    }
    fn bounds(&self) -> ModelBounds {
        ModelBounds { k1: 1.0, k2: 2.0, k3: 1.0, k4: 2.0, k5: 2.0 / 3.0, k6: 1.5, sigma_sup: 1.5 }
    }
}

/// Coefficients tabulated against `x` and interpolated linearly, held
/// constant beyond the first and last abscissa.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    label: String,
    x: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
}

impl TableModel {
    pub fn new(label: impl Into<String>, x: Vec<f64>, b: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != b.len() || x.len() != sigma.len() {
            return Err(usage("table model needs at least two rows of (x, b, sigma)"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(usage("table model abscissae must be strictly increasing"));
        }
        if x.iter().chain(&b).chain(&sigma).any(|v| !v.is_finite()) {
            return Err(usage("table model contains non-finite values"));
        }
        if sigma.iter().any(|&s| s == 0.0) || sigma.windows(2).any(|w| w[0].signum() != w[1].signum()) {
            return Err(domain("table model diffusion must stay away from zero"));
        }
        Ok(Self { label: label.into(), x, b, sigma })
    }

    /// Parses `x,b,sigma` rows; blank lines, `#` comments and a non-numeric
    /// header row are skipped.
    pub fn parse(label: impl Into<String>, text: &str) -> Result<Self> {
        let (mut x, mut b, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let nums: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match nums {
                Ok(v) if v.len() == 3 => {
                    x.push(v[0]);
                    b.push(v[1]);
                    s.push(v[2]);
                }
                Err(_) if x.is_empty() && ln == 0 => continue,
                _ => return Err(usage(format!("table model: bad row {}: '{line}'", ln + 1))),
            }
        }
        Self::new(label, x, b, s)
    }

    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let n = self.x.len();
        if x <= self.x[0] || x >= self.x[n - 1] {
            return None;
        }
        let k = self.x.partition_point(|&v| v <= x) - 1;
        Some((k, (x - self.x[k]) / (self.x[k + 1] - self.x[k])))
    }

    fn interp(&self, col: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((k, u)) => col[k] + u * (col[k + 1] - col[k]),
            None if x <= self.x[0] => col[0],
            None => col[col.len() - 1],
        }
    }

    fn slope(&self, col: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((k, _)) => (col[k + 1] - col[k]) / (self.x[k + 1] - self.x[k]),
            None => 0.0,
        }
    }

    fn max_slope(&self, col: &[f64]) -> f64 {
        self.x
            .windows(2)
            .zip(col.windows(2))
            .map(|(x, c)| ((c[1] - c[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

impl CoefficientModel for TableModel {
    fn name(&self) -> String {
        format!("table:{}", self.label)
    }
    fn drift(&self, _t: f64, x: f64) -> f64 {
        self.interp(&self.b, x)
    }
    fn diffusion(&self, _t: f64, x: f64) -> f64 {
        self.interp(&self.sigma, x)
    }
    fn drift_dx(&self, _t: f64, x: f64) -> f64 {
        self.slope(&self.b, x)
    }
    fn diffusion_dx(&self, _t: f64, x: f64) -> f64 {
        self.slope(&self.sigma, x)
    }
    fn is_additive(&self) -> bool {
        self.sigma.iter().all(|&s| s == self.sigma[0])
    }
    fn bounds(&self) -> ModelBounds {
        let kb = self.max_slope(&self.b);
        let ks = self.max_slope(&self.sigma);
        let min_abs = self.sigma.iter().map(|s| s.abs()).fold(f64::INFINITY, f64::min);
        let max_abs = self.sigma.iter().map(|s| s.abs()).fold(0.0, f64::max);
        ModelBounds {
            k1: kb,
            k2: 1.0 / min_abs,
            k3: kb,
            k4: 1.0 / min_abs,
            k5: 1.0 / max_abs,
            k6: kb + ks,
            sigma_sup: max_abs,
        }
    }
}

/// Model selector: `linear:κ`, `ou:θ`, `zero`, `trig` or `table:FILE`
/// (`custom-table:FILE` is accepted as a synonym).
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear(f64),
    Ou(f64),
    Zero,
    Trig,
    Table(String),
}

impl FromStr for ModelSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let number = |a: Option<&str>| -> Result<f64> {
            let a = a.ok_or_else(|| usage(format!("model '{head}' needs a numeric parameter")))?;
            a.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| usage(format!("model '{head}': bad parameter '{a}'")))
        };
        match head {
            "linear" => Ok(Self::Linear(number(arg)?)),
            "ou" => Ok(Self::Ou(number(arg)?)),
            "zero" if arg.is_none() => Ok(Self::Zero),
            "trig" if arg.is_none() => Ok(Self::Trig),
            "table" | "custom-table" => match arg {
                Some(path) if !path.is_empty() => Ok(Self::Table(path.to_string())),
                _ => Err(usage("table model needs a file: table:FILE")),
            },
            _ => Err(usage(format!("unknown model '{s}'"))),
        }
    }
}

impl ModelSpec {
    /// Instantiates the model, reading the table file if needed.
    pub fn build(&self) -> Result<Box<dyn CoefficientModel>> {
        Ok(match self {
            Self::Linear(k) => Box::new(LinearModel { kappa: *k }),
            Self::Ou(t) => Box::new(OuModel { theta: *t }),
            Self::Zero => Box::new(ZeroDriftModel),
            Self::Trig => Box::new(TrigModel),
            Self::Table(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read model table '{path}': {e}")))?;
                Box::new(TableModel::parse(path.clone(), &text)?)
            }
        })
    }
}

/// Solution values on the grid nodes, `values[0] = x0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionPath {
    pub grid: TimeGrid,
    pub x0: f64,
    pub values: Vec<f64>,
}

impl SolutionPath {
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

fn non_finite(step: usize, what: &str) -> Error {
    Error::Numerical(format!("{what} became non-finite at step {step}"))
}

/// Left-point Volterra scheme for `X_t = x0 + ∫K_H b ds + ∫K_H σ dW`.
pub fn solve_volterra(
    model: &dyn CoefficientModel,
    x0: f64,
    dw: &WienerIncrements,
    weights: &KernelWeights,
) -> Result<SolutionPath> {
    weights.grid().ensure_same(&dw.grid)?;
    let grid = dw.grid;
    let n = grid.steps();
    let dt = grid.dt();
    let inv_dt = 1.0 / dt;
    // per-cell increment b_j Δ + σ_j dW_j, so that X_i = x0 + Σ_j (w_ij/Δ) incr_j
    let mut incr = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n + 1);
    x.push(x0);
    for i in 0..n {
        let (t, xi) = (grid.t(i), x[i]);
        incr.push(model.drift(t, xi) * dt + model.diffusion(t, xi) * dw.dw[i]);
        let next = x0 + weights.row_dot(i + 1, &incr) * inv_dt;
        if !next.is_finite() {
            return Err(non_finite(i + 1, "solution"));
        }
        x.push(next);
    }
    Ok(SolutionPath { grid, x0, values: x })
}

/// Tangent process `Y = ∂X/∂x0 · y` on the same noise as `base`.
pub fn solve_variational(
    model: &dyn CoefficientModel,
    y: f64,
    dw: &WienerIncrements,
    weights: &KernelWeights,
    base: &SolutionPath,
) -> Result<SolutionPath> {
    weights.grid().ensure_same(&dw.grid)?;
    base.grid.ensure_same(&dw.grid)?;
    let grid = dw.grid;
    let n = grid.steps();
    let dt = grid.dt();
    let inv_dt = 1.0 / dt;
    let mut gain = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n + 1);
    out.push(y);
    for i in 0..n {
        let (t, xi) = (grid.t(i), base.values[i]);
        gain.push((model.drift_dx(t, xi) * dt + model.diffusion_dx(t, xi) * dw.dw[i]) * out[i]);
        let next = y + weights.row_dot(i + 1, &gain) * inv_dt;
        if !next.is_finite() {
            return Err(non_finite(i + 1, "tangent process"));
        }
        out.push(next);
    }
    Ok(SolutionPath { grid, x0: y, values: out })
}

/// Additive-noise path with the deterministic ramp `(t/T)·shift` added.
pub fn solve_shifted(
    model: &dyn CoefficientModel,
    x0: f64,
    dw: &WienerIncrements,
    weights: &KernelWeights,
    shift: f64,
) -> Result<SolutionPath> {
    if !model.is_additive() {
        return Err(usage(format!("shifted path needs additive noise; model '{}' is not", model.name())));
    }
    let mut path = solve_volterra(model, x0, dw, weights)?;
    let horizon = path.grid.horizon();
    for (i, v) in path.values.iter_mut().enumerate() {
        *v += path.grid.t(i) / horizon * shift;
    }
    Ok(path)
}

/// Textbook Euler–Maruyama recursion `X_{i+1} = X_i + b Δ + σ dW_i`.
pub fn euler_maruyama(model: &dyn CoefficientModel, x0: f64, dw: &WienerIncrements) -> SolutionPath {
    let grid = dw.grid;
    let dt = grid.dt();
    let mut x = Vec::with_capacity(grid.nodes());
    x.push(x0);
    for i in 0..grid.steps() {
        let (t, xi) = (grid.t(i), x[i]);
        x.push(xi + model.drift(t, xi) * dt + model.diffusion(t, xi) * dw.dw[i]);
    }
    SolutionPath { grid, x0, values: x }
}
