use serde::{Deserialize, Serialize};

use crate::error::{domain, usage, Result};

/// Uniform partition `t_i = i·T/n`, `i = 0..=n`, of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(domain(format!("time horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(domain("grid needs at least one step"));
        }
        Ok(Self { horizon, steps })
    }

    /// T
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of cells n.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, n + 1.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Δ = T/n
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    /// Midpoint of cell `j`, i.e. of `[t_j, t_{j+1}]`.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.t(i)).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.steps).map(|j| self.midpoint(j)).collect()
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(usage(format!(
                "grid mismatch: (T={}, n={}) vs (T={}, n={})",
                self.horizon, self.steps, other.horizon, other.steps
            )));
        }
        Ok(())
    }
}

/// Real values attached to the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes() {
            return Err(usage(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.nodes()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.times().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.nodes()] }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at the midpoint of each cell by linear interpolation.
    pub fn cell_midpoint_values(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        let values = self.values.iter().enumerate().map(|(i, &v)| f(i, v)).collect();
        Self { grid: self.grid, values }
    }
}

impl std::ops::Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}
