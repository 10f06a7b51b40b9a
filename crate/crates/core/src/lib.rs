//! Numerical laboratory for stochastic differential equations driven by
//! fractional Brownian motion written in Volterra form.

pub mod error;
pub mod fraccalc;
pub mod grid;
pub mod inequalities;
pub mod kernel;
pub mod malliavin;
pub mod noise;
pub mod quad;
pub mod report;
pub mod solver;
pub mod specfun;
pub mod stats;
pub mod transport;

pub use error::{Error, Result};
pub use grid::{GridFunction, TimeGrid};
