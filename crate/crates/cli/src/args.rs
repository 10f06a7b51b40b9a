//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fbmlab",
    version,
    about = "Kernels, solvers, Malliavin-weight gradients and functional-inequality checks for fBm-driven SDEs",
    args_override_self = true,
    after_help = "Any subcommand accepts --config FILE with key=value lines (e.g. `H=0.7`); flags given on the \
                  command line take precedence. FBMLAB_THREADS caps the number of worker threads."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GridArgs {
    /// Hurst parameter in (0, 1)
    #[arg(long = "H", default_value_t = 0.7)]
    pub hurst: f64,
    /// Time horizon
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Number of grid steps
    #[arg(long, default_value_t = 512)]
    pub n: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Number of Monte Carlo paths (at least 100)
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Seed of the Wiener streams
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Write the JSON report here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the tabular data of the run as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Kernel consistency tables (identity, covariance, representation)
    Kernel {
        #[command(flatten)]
        grid: GridArgs,
        /// identity | covariance | representation
        #[arg(long, default_value = "identity")]
        check: String,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Sample fractional Brownian paths and compare their covariance with R_H
    Fbm {
        #[command(flatten)]
        mc: McArgs,
        /// volterra | cholesky
        #[arg(long, default_value = "volterra")]
        method: String,
        /// Number of paths written to the CSV table
        #[arg(long, default_value_t = 5)]
        export: usize,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Solve the Volterra equation along one Wiener path
    Solve {
        #[command(flatten)]
        grid: GridArgs,
        /// linear:K | ou:THETA | zero | trig | table:FILE
        #[arg(long, default_value = "linear:0.5")]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Bismut-weight gradient of P_T f with pathwise and finite-difference oracles
    Bismut {
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, default_value = "linear:0.5")]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// id | square | sin | exp-clamped | const:C | 2+sin | bump | step:A | 1+gauss
        #[arg(long, default_value = "id")]
        f: String,
        /// default | table:FILE
        #[arg(long, default_value = "default")]
        control: String,
        #[arg(long, default_value_t = 1e-3)]
        fd_eps: f64,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Shift-weight estimate of P_T(∇_y f)
    Ibp {
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, default_value = "zero")]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value = "sin")]
        f: String,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Gradient, Harnack and log-Harnack checks and the continuity probe
    Harnack {
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, default_value = "linear:0.5")]
        model: String,
        /// gradient | entropy | harnack | log | shift | shift-log | feller
        #[arg(long, default_value = "harnack")]
        variant: String,
        #[arg(long, default_value = "2+sin")]
        f: String,
        /// Starting point x
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Second point (harnack, log), direction (gradient, entropy) or shift (shift, shift-log)
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Entropy weight of the entropy-gradient variant
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Radii of the continuity probe
        #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.2,0.1,0.05,0.01,0")]
        radii: Vec<f64>,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Transportation inequality through synchronous coupling
    Transport {
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, default_value = "ou:1")]
        model: String,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// uniform | l2
        #[arg(long, default_value = "uniform")]
        metric: String,
        /// const:VAL | linear:VAL | table:FILE
        #[arg(long, default_value = "const:0.5")]
        u: String,
        /// Free parameter of C(2); defaults to H - 1/2
        #[arg(long)]
        theta: Option<f64>,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Maximal inequality for Volterra stochastic integrals
    Maxineq {
        #[command(flatten)]
        mc: McArgs,
        /// const:VAL | linear
        #[arg(long, default_value = "const:1")]
        phi: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Free parameter of C(p); defaults to H - 1/2
        #[arg(long)]
        theta: Option<f64>,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
    /// Run acceptance criteria 1 to 9 and print the determinism hash
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        #[serde(skip)]
        output: OutputArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Kernel { .. } => "kernel",
            Self::Fbm { .. } => "fbm",
            Self::Solve { .. } => "solve",
            Self::Bismut { .. } => "bismut",
            Self::Ibp { .. } => "ibp",
            Self::Harnack { .. } => "harnack",
            Self::Transport { .. } => "transport",
            Self::Maxineq { .. } => "maxineq",
            Self::Selftest { .. } => "selftest",
        }
    }

    pub fn output(&self) -> &OutputArgs {
        match self {
            Self::Kernel { output, .. }
            | Self::Fbm { output, .. }
            | Self::Solve { output, .. }
            | Self::Bismut { output, .. }
            | Self::Ibp { output, .. }
            | Self::Harnack { output, .. }
            | Self::Transport { output, .. }
            | Self::Maxineq { output, .. }
            | Self::Selftest { output, .. } => output,
        }
    }
}
