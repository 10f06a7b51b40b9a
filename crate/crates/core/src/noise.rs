//! Seeded Wiener increments, Volterra synthesis of fractional Brownian motion
//! and an exact Cholesky sampler used as an independent oracle.
//!
//! Every path owns a ChaCha8 stream selected by `(seed, domain, path_index)`;
//! the `k`-th increment is the `k`-th normal drawn from it. Paths can therefore
//! be generated in any order or in parallel with bitwise identical results.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::{covariance_rh, KernelWeights};

/// Independent stream families sharing one user seed.
const WIENER_DOMAIN: u64 = 0x5749_454e_4552; // "WIENER"
const CHOLESKY_DOMAIN: u64 = 0x4348_4f4c_4553; // "CHOLES"

/// Largest grid accepted by the dense Cholesky oracle.
pub const CHOLESKY_MAX_STEPS: usize = 2048;

fn stream(seed: u64, domain: u64, path_index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(path_index);
    rng
}

fn normals(rng: &mut ChaCha8Rng, count: usize, scale: f64) -> Vec<f64> {
    (0..count).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Increments `dW[j] = W(t_{j+1}) - W(t_j)` of one Brownian path.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrements {
    pub grid: TimeGrid,
    pub dw: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl WienerIncrements {
    /// Increments supplied directly (e.g. all zero for deterministic runs).
    pub fn from_values(grid: TimeGrid, dw: Vec<f64>) -> Result<Self> {
        if dw.len() != grid.steps() {
            return Err(usage(format!("{} increments for {} cells", dw.len(), grid.steps())));
        }
        Ok(Self { grid, dw, seed: 0, path_index: 0 })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, dw: vec![0.0; grid.steps()], seed: 0, path_index: 0 }
    }
}

/// Draws `n` independent `N(0, Δ)` increments for `(seed, path_index)`.
pub fn sample_wiener(grid: TimeGrid, seed: u64, path_index: u64) -> WienerIncrements {
    let mut rng = stream(seed, WIENER_DOMAIN, path_index);
    let dw = normals(&mut rng, grid.steps(), grid.dt().sqrt());
    WienerIncrements { grid, dw, seed, path_index }
}

/// Values of a fractional Brownian path on the grid nodes, `values[0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbmPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

/// `B[i] = Σ_{j<i} (w[i][j]/Δ) dW[j]`.
pub fn fbm_from_wiener(dw: &WienerIncrements, weights: &KernelWeights) -> Result<FbmPath> {
    weights.grid().ensure_same(&dw.grid)?;
    let grid = dw.grid;
    let inv_dt = 1.0 / grid.dt();
    let values = (0..grid.nodes()).map(|i| weights.row_dot(i, &dw.dw) * inv_dt).collect();
    Ok(FbmPath { grid, values })
}

/// Exact Gaussian sampler with covariance `R_H(t_i, t_k)`, `1 <= i, k <= n`.
#[derive(Debug, Clone)]
pub struct CholeskyFbm {
    grid: TimeGrid,
    hurst: f64,
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFbm {
    /// Factorises the covariance matrix, retrying with a growing diagonal
    /// jitter (relative to the mean variance) if round-off breaks definiteness.
    pub fn new(grid: TimeGrid, hurst: f64) -> Result<Self> {
        crate::kernel::check_hurst(hurst)?;
        let n = grid.steps();
        if n > CHOLESKY_MAX_STEPS {
            return Err(usage(format!(
                "Cholesky oracle supports at most {CHOLESKY_MAX_STEPS} steps, got {n}"
            )));
        }
        let cov = DMatrix::from_fn(n, n, |i, k| covariance_rh(grid.t(i + 1), grid.t(k + 1), hurst));
        let scale = cov.diagonal().mean();
        let mut tried = Vec::new();
        for jitter in [0.0, 1e-14, 1e-12, 1e-10, 1e-8] {
            let mut m = cov.clone();
            for i in 0..n {
                m[(i, i)] += jitter * scale;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(Self { grid, hurst, lower: ch.unpack(), jitter });
            }
            tried.push(jitter);
        }
        Err(Error::Numerical(format!(
            "fBm covariance not positive definite at H={hurst}, n={n}; relative jitters tried: {tried:?}"
        )))
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// Relative diagonal jitter that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, seed: u64, path_index: u64) -> FbmPath {
        let n = self.grid.steps();
        let mut rng = stream(seed, CHOLESKY_DOMAIN, path_index);
        let z = DVector::from_vec(normals(&mut rng, n, 1.0));
        let x = &self.lower * z;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        values.extend(x.iter().copied());
        FbmPath { grid: self.grid, values }
    }
}

/// One-shot Cholesky sample; factorises on every call, so prefer
/// [`CholeskyFbm`] for ensembles.
pub fn fbm_cholesky_oracle(grid: TimeGrid, hurst: f64, seed: u64, path_index: u64) -> Result<FbmPath> {
    Ok(CholeskyFbm::new(grid, hurst)?.sample(seed, path_index))
}

/// Runs `f` for path indices `0..paths` on the rayon pool and returns the
/// results in path order.
pub fn par_paths<T, F>(paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..paths as u64).into_par_iter().map(f).collect()
}

/// Outcome of a two-sample Kolmogorov–Smirnov test at the 1% level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsTest {
    pub statistic: f64,
    pub critical: f64,
}

impl KsTest {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

/// Two-sample KS statistic `sup |F_a - F_b|` with the asymptotic 1% critical
/// value `1.628 sqrt((n+m)/(nm))`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsTest {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (n, m) = (xa.len(), xb.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xa[i].min(xb[j]);
        while i < n && xa[i] <= x {
            i += 1;
        }
        while j < m && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    KsTest { statistic: d, critical: 1.628 * ((nf + mf) / (nf * mf)).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_weights;

    #[test]
    fn wiener_is_reproducible_and_distinct() {
        let g = TimeGrid::new(1.0, 64).unwrap();
        let a = sample_wiener(g, 7, 3);
        assert_eq!(a, sample_wiener(g, 7, 3));
        assert_ne!(a.dw, sample_wiener(g, 7, 4).dw);
        assert_ne!(a.dw, sample_wiener(g, 8, 3).dw);
        assert_eq!(a.dw.len(), 64);
    }

    #[test]
    fn brownian_synthesis_is_cumulative_sum() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let w = build_weights(g, 0.5).unwrap();
        let dw = sample_wiener(g, 1, 0);
        let b = fbm_from_wiener(&dw, &w).unwrap();
        let mut acc = 0.0;
        for i in 0..=50 {
            assert!((b.values[i] - acc).abs() < 1e-14);
            if i < 50 {
                acc += dw.dw[i];
            }
        }
        let zero = fbm_from_wiener(&WienerIncrements::zeros(g), &w).unwrap();
        assert!(zero.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g = TimeGrid::new(1.0, 50).unwrap();
        let w = build_weights(TimeGrid::new(1.0, 40).unwrap(), 0.5).unwrap();
        assert!(fbm_from_wiener(&sample_wiener(g, 1, 0), &w).is_err());
        assert!(WienerIncrements::from_values(g, vec![0.0; 3]).is_err());
    }

    #[test]
    fn cholesky_oracle_basics() {
        let g = TimeGrid::new(1.0, 32).unwrap();
        let c = CholeskyFbm::new(g, 0.7).unwrap();
        let p = c.sample(3, 0);
        assert_eq!(p.values.len(), 33);
        assert_eq!(p.values[0], 0.0);
        assert_eq!(p, c.sample(3, 0));
        assert!(CholeskyFbm::new(TimeGrid::new(1.0, 4096).unwrap(), 0.7).is_err());
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        assert_eq!(ks_two_sample(&a, &a).statistic, 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 2.0).collect();
        let t = ks_two_sample(&a, &b);
        assert_eq!(t.statistic, 1.0);
        // a quarter-length shift on a uniform grid: half of each sample overlaps
        let c: Vec<f64> = (0..400).map(|i| (i as f64 + 0.5) / 400.0).collect();
        let d: Vec<f64> = c.iter().map(|x| x + 0.25).collect();
        assert!((ks_two_sample(&c, &d).statistic - 0.25).abs() < 1e-2);
        assert!(!t.passes());
    }

    #[test]
    fn par_paths_keeps_order() {
        let v = par_paths(1000, |p| p * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i as u64));
    }
}
