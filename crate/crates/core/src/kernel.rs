//! The Volterra kernel of fractional Brownian motion,
//!
//! ```text
//! K_H(t,s) = α_H (t-s)^{H-1/2} F(H-1/2, 1/2-H; H+1/2; 1 - t/s),   0 < s < t,
//! α_H = sqrt(2H Γ(3/2-H) / (Γ(H+1/2) Γ(2-2H))),
//! ```
//!
//! normalised so that `∫_0^{t∧s} K_H(t,r) K_H(s,r) dr = R_H(t,s)`, together with
//! the integrated weight matrix used by every Volterra sum in the crate.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{domain, usage, Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::quad::tanh_sinh;
use crate::specfun::{gamma, Hyp2f1};

const QUAD_TOL: f64 = 1e-12;
/// Relative tolerance of the `K_H(C_H s^{1/2-H})(t) = t` gate.
const IDENTITY_GATE: f64 = 1e-2;
const CACHE_CAPACITY: usize = 6;

pub(crate) fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("Hurst parameter must lie in (0, 1), got {hurst}")))
    }
}

/// `α_H`; equals 1 at H = 1/2.
pub fn alpha_h(hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    let num = 2.0 * hurst * gamma(1.5 - hurst)?;
    let den = gamma(hurst + 0.5)? * gamma(2.0 - 2.0 * hurst)?;
    Ok((num / den).sqrt())
}

/// Hurst index with the derived quantities `H_0 = |H - 1/2|` and `κ_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HurstParams {
    pub hurst: f64,
    pub h0: f64,
    pub horizon: f64,
}

impl HurstParams {
    pub fn new(hurst: f64, horizon: f64) -> Result<Self> {
        check_hurst(hurst)?;
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("time horizon must be positive, got {horizon}")));
        }
        Ok(Self { hurst, h0: (hurst - 0.5).abs(), horizon })
    }

    /// Whether `p` belongs to `A_H = {p >= 1 : p·H_0 < 1}`.
    pub fn is_admissible(&self, p: f64) -> bool {
        p >= 1.0 && p * self.h0 < 1.0
    }

    /// `κ_p = (1 - p·H_0)^{-1}`.
    pub fn kappa_p(&self, p: f64) -> Result<f64> {
        if !(p * self.h0 < 1.0) {
            return Err(domain(format!("kappa_p undefined: p·H0 = {} >= 1", p * self.h0)));
        }
        Ok(1.0 / (1.0 - p * self.h0))
    }
}

/// `R_H(t,s) = (t^{2H} + s^{2H} - |t-s|^{2H}) / 2`.
pub fn covariance_rh(t: f64, s: f64, hurst: f64) -> f64 {
    let e = 2.0 * hurst;
    0.5 * (t.powf(e) + s.powf(e) - (t - s).abs().powf(e))
}

/// `K_H(t,s)` with the hypergeometric coefficients prepared once.
#[derive(Debug, Clone, Copy)]
pub struct VolterraKernel {
    hurst: f64,
    alpha: f64,
    hyp: Hyp2f1,
}

impl VolterraKernel {
    pub fn new(hurst: f64) -> Result<Self> {
        let alpha = alpha_h(hurst)?;
        let beta = hurst - 0.5;
        let hyp = Hyp2f1::new(beta, -beta, hurst + 0.5)?;
        Ok(Self { hurst, alpha, hyp })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `K_H(t,s)` for `0 < s < t`.
    pub fn eval(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < t) {
            return Err(domain(format!("kernel needs 0 < s < t, got t={t}, s={s}")));
        }
        self.eval_gap(s, t - s)
    }

    /// `K_H(s + gap, s)`. Callers that know `t - s` more accurately than the
    /// rounded difference pass it directly.
    pub fn eval_gap(&self, s: f64, gap: f64) -> Result<f64> {
        let beta = self.hurst - 0.5;
        if beta == 0.0 {
            return Ok(1.0);
        }
        let f = self.hyp.eval(-gap / s)?;
        Ok(self.alpha * gap.powf(beta) * f)
    }

    /// `K_H(t,s) - α_H (t-s)^{H-1/2}`, the part of the kernel that stays
    /// bounded at the diagonal.
    fn remainder_gap(&self, s: f64, gap: f64) -> Result<f64> {
        let beta = self.hurst - 0.5;
        if beta == 0.0 {
            return Ok(0.0);
        }
        let f = self.hyp.eval(-gap / s)?;
        Ok(self.alpha * gap.powf(beta) * (f - 1.0))
    }

    /// `∂K_H/∂t = α_H (H-1/2) (s/t)^{1/2-H} (t-s)^{H-3/2}`.
    pub fn dkdt(&self, t: f64, s: f64) -> Result<f64> {
        if !(s > 0.0 && s < t) {
            return Err(domain(format!("kernel needs 0 < s < t, got t={t}, s={s}")));
        }
        let beta = self.hurst - 0.5;
        if beta == 0.0 {
            return Ok(0.0);
        }
        Ok(self.alpha * beta * (s / t).powf(-beta) * (t - s).powf(beta - 1.0))
    }

    /// `∫_a^b K_H(t,s) g(s) ds` for `0 <= a < b <= t` by tanh-sinh quadrature.
    pub fn integrate<G: Fn(f64) -> f64>(&self, t: f64, a: f64, b: f64, g: G) -> f64 {
        let tail = t - b;
        tanh_sinh(
            |s, _, db| {
                if s <= 0.0 {
                    return 0.0;
                }
                self.eval_gap(s, tail + db).map(|k| k * g(s)).unwrap_or(f64::NAN)
            },
            a,
            b,
            QUAD_TOL,
        )
    }
}

/// `K_H(t,s)` through the hypergeometric representation.
pub fn kernel_kh(t: f64, s: f64, hurst: f64) -> Result<f64> {
    VolterraKernel::new(hurst)?.eval(t, s)
}

/// `∂K_H(t,s)/∂t`.
pub fn kernel_dkdt(t: f64, s: f64, hurst: f64) -> Result<f64> {
    VolterraKernel::new(hurst)?.dkdt(t, s)
}

/// `K_H(t,s)` by quadrature, independently of the hypergeometric series.
///
/// For H > 1/2 this is `ᾱ_H s^{1/2-H} ∫_s^t r^{H-1/2} (r-s)^{H-3/2} dr`; for
/// H <= 1/2 it is
/// `α_H (t-s)^{H-1/2} + α_H (1/2-H) ∫_s^t (r-s)^{H-3/2} (1 - (s/r)^{1/2-H}) dr`.
pub fn kernel_integral_form(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return Err(domain(format!("kernel needs 0 < s < t, got t={t}, s={s}")));
    }
    let alpha = alpha_h(hurst)?;
    let beta = hurst - 0.5;
    if beta == 0.0 {
        return Ok(1.0);
    }
    if beta > 0.0 {
        let integral = tanh_sinh(|r, da, _| r.powf(beta) * da.powf(beta - 1.0), s, t, 1e-14);
        Ok(alpha * beta * s.powf(-beta) * integral)
    } else {
        let integral = tanh_sinh(
            |_, da, _| {
                // 1 - (s/r)^{-β} with r = s + da, written to avoid cancellation
                let one_minus = -(beta * (da / s).ln_1p()).exp_m1();
                da.powf(beta) * (one_minus / da)
            },
            s,
            t,
            1e-14,
        );
        Ok(alpha * (t - s).powf(beta) - alpha * beta * integral)
    }
}

/// `α_H`, `ᾱ_H = α_H (H - 1/2)` (H > 1/2 only) and `C_H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelConstants {
    pub hurst: f64,
    pub alpha_h: f64,
    pub alpha_bar_h: Option<f64>,
    pub c_h: f64,
}

impl KernelConstants {
    /// Computes the constants and verifies `C_H` against the defining identity
    /// `∫_0^t K_H(t,s) C_H s^{1/2-H} ds = t` (checked at t = 1; the identity is
    /// scale invariant).
    pub fn new(hurst: f64) -> Result<Self> {
        let c_h = constant_ch_closed_form(hurst)?;
        let alpha = alpha_h(hurst)?;
        let kernel = VolterraKernel::new(hurst)?;
        let image = kernel.integrate(1.0, 0.0, 1.0, |s| c_h * s.powf(0.5 - hurst));
        let err = (image - 1.0).abs();
        if !(err <= IDENTITY_GATE) {
            return Err(Error::Config(format!(
                "C_H = {c_h} fails the identity K_H(C_H s^(1/2-H))(1) = 1 at H = {hurst}: got {image}"
            )));
        }
        Ok(Self {
            hurst,
            alpha_h: alpha,
            alpha_bar_h: (hurst > 0.5).then(|| alpha * (hurst - 0.5)),
            c_h,
        })
    }
}

/// `C_H = Γ(3/2-H) / (Γ(2-2H) Γ(H+1/2) α_H)`, the constant making
/// `K_H(C_H s^{1/2-H})(t) = t` for the kernel normalised as in this module.
fn constant_ch_closed_form(hurst: f64) -> Result<f64> {
    if hurst == 0.5 {
        return Ok(1.0);
    }
    let alpha = alpha_h(hurst)?;
    Ok(gamma(1.5 - hurst)? / (gamma(2.0 - 2.0 * hurst)? * gamma(hurst + 0.5)? * alpha))
}

/// Identity-gated `C_H`.
pub fn constant_ch(hurst: f64) -> Result<f64> {
    Ok(KernelConstants::new(hurst)?.c_h)
}

/// `∫_0^{t∧s} K_H(t,r) K_H(s,r) dr` by quadrature.
pub fn kernel_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(domain("covariance needs non-negative times"));
    }
    let (lo, hi) = if t <= s { (t, s) } else { (s, t) };
    if lo == 0.0 {
        return Ok(0.0);
    }
    let k = VolterraKernel::new(hurst)?;
    let offset = hi - lo;
    let v = tanh_sinh(
        |r, _, db| {
            if r <= 0.0 {
                return 0.0;
            }
            let a = k.eval_gap(r, db).unwrap_or(f64::NAN);
            let b = k.eval_gap(r, offset + db).unwrap_or(f64::NAN);
            a * b
        },
        0.0,
        lo,
        QUAD_TOL,
    );
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("kernel covariance quadrature failed at ({t}, {s})")))
    }
}

/// Lower-triangular matrix `w[i][j] ≈ ∫_{t_j}^{t_{j+1}} K_H(t_i, s) ds`,
/// `1 <= i <= n`, `0 <= j < i`, stored row by row.
///
/// Cells `j >= 1` integrate `α_H (t_i-s)^{H-1/2}` exactly and add the bounded
/// remainder of the kernel at the cell midpoint. The first cell carries the
/// root-mean-square weight described at [`first_cell_weight`].
#[derive(Debug, Clone)]
pub struct KernelWeights {
    grid: TimeGrid,
    kernel: VolterraKernel,
    packed: Vec<f64>,
}

impl KernelWeights {
    fn offset(i: usize) -> usize {
        i * (i - 1) / 2
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.kernel.hurst
    }

    pub fn kernel(&self) -> &VolterraKernel {
        &self.kernel
    }

    /// Weights `w[i][0..i]`; empty for `i = 0`.
    pub fn row(&self, i: usize) -> &[f64] {
        if i == 0 {
            return &[];
        }
        let o = Self::offset(i);
        &self.packed[o..o + i]
    }

    /// `w[i][j]`, zero when `j >= i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j >= i {
            0.0
        } else {
            self.packed[Self::offset(i) + j]
        }
    }

    /// `Σ_j w[i][j] v[j]` over one row, `v` holding one value per cell.
    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// `(K_H f)(t_i) ≈ Σ_{j<i} w[i][j] f(m_j)` with `f(m_j)` the linear
    /// interpolant of the node values at the cell midpoint.
    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.ensure_same(f.grid())?;
        if let Some(k) = f.values().iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("grid function has a non-finite value at node {k}")));
        }
        let mid = f.cell_midpoint_values();
        let out = (0..self.grid.nodes()).map(|i| self.row_dot(i, &mid)).collect();
        GridFunction::new(self.grid, out)
    }

    /// `(K_H f)(t_i)` for a function given pointwise on `(0, T]`: cells
    /// `j >= 1` are sampled at their midpoints, the first cell (where both the
    /// kernel and typical integrands such as `s^{1/2-H}` are singular) is
    /// integrated by quadrature.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        let mid: Vec<f64> = self.grid.midpoints().into_iter().map(&f).collect();
        let dt = self.grid.dt();
        let out = (0..self.grid.nodes())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let row = self.row(i);
                let tail: f64 = row.iter().zip(&mid).skip(1).map(|(w, x)| w * x).sum();
                tail + self.kernel.integrate(self.grid.t(i), 0.0, dt, &f)
            })
            .collect();
        GridFunction::new(self.grid, out).expect("length matches grid")
    }

    /// Per-cell values `v_j = ∫_{cell j} K_H(T,s) f(s) ds / w[n][j]`, the
    /// averages of `f` weighted by the terminal kernel row, so that
    /// `Σ_j w[n][j] v_j = (K_H f)(T)` up to quadrature error.
    pub fn cell_values(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.grid.steps();
        let horizon = self.grid.horizon();
        (0..n)
            .map(|j| {
                let (a, b) = (self.grid.t(j), self.grid.t(j + 1));
                self.kernel.integrate(horizon, a, b, &f) / self.get(n, j)
            })
            .collect()
    }

    /// `Σ_j w[i][j] w[k][j] / Δ`, the covariance of the discrete fBm at
    /// `(t_i, t_k)`.
    pub fn discrete_covariance(&self, i: usize, k: usize) -> f64 {
        let (a, b) = (self.row(i), self.row(k));
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / self.grid.dt()
    }
}

/// Weight of the first cell, `sqrt(Δ ∫_0^Δ K_H(t,s)^2 ds)`.
///
/// The kernel behaves like `s^{-|H-1/2|}` at the origin, so the cell average
/// of `K_H(t,·)` understates its mean square there and the discrete fBm would
/// lose variance of order `Δ^{1-2|H-1/2|}` from this single cell. Matching the
/// second moment instead keeps `Σ_j w[i][j] w[k][j] / Δ` close to `R_H`; the
/// value differs from `∫_0^Δ K_H(t,s) ds` by a few percent.
fn first_cell_weight(kernel: &VolterraKernel, t: f64, dt: f64) -> f64 {
    let tail = t - dt;
    let second_moment = tanh_sinh(
        |s, _, db| {
            if s <= 0.0 {
                return 0.0;
            }
            let k = kernel.eval_gap(s, tail + db).unwrap_or(f64::NAN);
            k * k
        },
        0.0,
        dt,
        QUAD_TOL,
    );
    (dt * second_moment).sqrt()
}

fn compute_weights(grid: TimeGrid, hurst: f64) -> Result<KernelWeights> {
    let kernel = VolterraKernel::new(hurst)?;
    let n = grid.steps();
    let dt = grid.dt();
    let beta = hurst - 0.5;
    let mut packed = vec![0.0; n * (n + 1) / 2];
    if beta == 0.0 {
        packed.iter_mut().for_each(|w| *w = dt);
        return Ok(KernelWeights { grid, kernel, packed });
    }
    let alpha = kernel.alpha;
    let p = beta + 1.0;
    let pw: Vec<f64> = (0..=n).map(|m| (m as f64).powf(p)).collect();
    let lead_scale = alpha * dt.powf(p) / p;
    // the remainder at (t_i, m_j) depends on (i, j) only through the lag and j
    for i in 1..=n {
        let o = i * (i - 1) / 2;
        let t = grid.t(i);
        packed[o] = first_cell_weight(&kernel, t, dt);
        for j in 1..i {
            let m = i - j;
            let lead = lead_scale * (pw[m] - pw[m - 1]);
            let gap = (m as f64 - 0.5) * dt;
            let rem = kernel.remainder_gap(grid.midpoint(j), gap)?;
            packed[o + j] = lead + dt * rem;
        }
    }
    if let Some(k) = packed.iter().position(|w| !w.is_finite()) {
        return Err(Error::Numerical(format!("non-finite kernel weight at packed index {k}")));
    }
    Ok(KernelWeights { grid, kernel, packed })
}

type CacheKey = (u64, usize, u64);

static CACHE: Mutex<VecDeque<(CacheKey, Arc<KernelWeights>)>> = Mutex::new(VecDeque::new());

/// Weight matrix for `(grid, H)`, shared through a small cache of recently
/// built matrices.
pub fn build_weights(grid: TimeGrid, hurst: f64) -> Result<Arc<KernelWeights>> {
    check_hurst(hurst)?;
    let key = (grid.horizon().to_bits(), grid.steps(), hurst.to_bits());
    if let Some(hit) = lookup(key) {
        return Ok(hit);
    }
    let built = Arc::new(compute_weights(grid, hurst)?);
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some((_, hit)) = cache.iter().find(|(k, _)| *k == key) {
        return Ok(Arc::clone(hit));
    }
    if cache.len() >= CACHE_CAPACITY {
        cache.pop_front();
    }
    cache.push_back((key, Arc::clone(&built)));
    Ok(built)
}

fn lookup(key: CacheKey) -> Option<Arc<KernelWeights>> {
    let cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache.iter().find(|(k, _)| *k == key).map(|(_, w)| Arc::clone(w))
}

/// Convenience: `K_H f` on the grid of `weights`.
pub fn apply_kh(f: &GridFunction, weights: &KernelWeights) -> Result<GridFunction> {
    weights.apply(f)
}

/// Which consistency table the `kernel` command emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelCheck {
    Identity,
    Covariance,
    Representation,
}

impl std::str::FromStr for KernelCheck {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Self::Identity),
            "covariance" => Ok(Self::Covariance),
            "representation" => Ok(Self::Representation),
            other => Err(usage(format!("unknown kernel check '{other}'"))),
        }
    }
}

/// One row of a kernel consistency table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckRow {
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub reference: f64,
    pub error: f64,
}

impl CheckRow {
    fn new(t: f64, s: f64, value: f64, reference: f64) -> Self {
        Self { t, s, value, reference, error: (value - reference).abs() }
    }
}

/// Builds a consistency table.
///
/// * `Identity`: `K_H(C_H s^{1/2-H})(t_i)` from the weights against `t_i`
///   (the `s` column holds 0).
/// * `Covariance`: `Σ_j w[i][j] w[k][j]/Δ` against `R_H(t_i, t_k)` on pairs of
///   nodes with `t_i, t_k >= T/10`.
/// * `Representation`: hypergeometric kernel against the quadrature form on a
///   7×7 sample of `(t, s)`.
pub fn check_table(check: KernelCheck, grid: TimeGrid, hurst: f64) -> Result<Vec<CheckRow>> {
    match check {
        KernelCheck::Identity => {
            let c = constant_ch(hurst)?;
            let w = build_weights(grid, hurst)?;
            let img = w.apply_fn(|s| c * s.powf(0.5 - hurst));
            Ok((0..grid.nodes()).map(|i| CheckRow::new(grid.t(i), 0.0, img[i], grid.t(i))).collect())
        }
        KernelCheck::Covariance => {
            let w = build_weights(grid, hurst)?;
            let probes = covariance_probe_nodes(grid.steps());
            let mut rows = Vec::new();
            for (a, &i) in probes.iter().enumerate() {
                for &k in &probes[a..] {
                    let (ti, tk) = (grid.t(i), grid.t(k));
                    rows.push(CheckRow::new(ti, tk, w.discrete_covariance(i, k), covariance_rh(ti, tk, hurst)));
                }
            }
            Ok(rows)
        }
        KernelCheck::Representation => {
            let k = VolterraKernel::new(hurst)?;
            let horizon = grid.horizon();
            let mut rows = Vec::new();
            for a in 1..=7 {
                let t = horizon * a as f64 / 7.0;
                for b in 1..=7 {
                    let s = t * (b as f64 - 0.5) / 7.0;
                    rows.push(CheckRow::new(t, s, k.eval(t, s)?, kernel_integral_form(t, s, hurst)?));
                }
            }
            Ok(rows)
        }
    }
}

/// Node indices `≈ n·{0.1, 0.25, 0.5, 0.75, 1}` used for covariance probes.
pub fn covariance_probe_nodes(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [0.1, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|q| ((q * n as f64).round() as usize).clamp(1, n))
        .collect();
    v.dedup();
    v
}
