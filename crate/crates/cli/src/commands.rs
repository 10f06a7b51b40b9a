//! One function per subcommand. Each returns the JSON results, the verdict
//! (if the command has one) and an optional CSV table.

use std::fs;

use fbmlab_core::kernel::{self, build_weights, check_table, covariance_rh, KernelCheck};
use fbmlab_core::malliavin::{
    gradient_triangle, ControlFunction, Ensemble, McConfig, SampleRequest, TestFunction, WeightedEstimate,
};
use fbmlab_core::noise::{fbm_from_wiener, par_paths, sample_wiener, CholeskyFbm};
use fbmlab_core::report::{Agreement, CheckReport};
use fbmlab_core::solver::{euler_maruyama, solve_volterra, CoefficientModel, ModelSpec};
use fbmlab_core::stats::{mean, std_error};
use fbmlab_core::transport::{check_maximal_inequality, check_t2, Metric, ShiftSpec};
use fbmlab_core::{inequalities as ineq, Error, Result, TimeGrid};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Command, GridArgs, McArgs};
use crate::output::Table;

pub struct Outcome {
    pub results: Value,
    pub pass: Option<bool>,
    pub table: Option<Table>,
    /// One human-readable line for standard error.
    pub summary: String,
}

impl Outcome {
    fn check(report: &CheckReport, extra: Value, table: Option<Table>) -> Self {
        let mut results = to_value(report);
        if let (Value::Object(m), Value::Object(e)) = (&mut results, extra) {
            m.extend(e);
        }
        Self {
            pass: Some(report.pass),
            summary: format!(
                "{}: {} (lhs {:.6e}, rhs {:.6e}, margin {:.3} SE)",
                report.name,
                report.verdict(),
                report.lhs,
                report.rhs,
                report.margin_in_se
            ),
            results,
            table,
        }
    }
}

pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

fn model(spec: &str) -> Result<Box<dyn CoefficientModel>> {
    parse::<ModelSpec>(spec)?.build()
}

fn grid(g: &GridArgs) -> Result<TimeGrid> {
    if !(g.hurst > 0.0 && g.hurst < 1.0) {
        return Err(Error::Domain(format!("H must lie in (0, 1), got {}", g.hurst)));
    }
    TimeGrid::new(g.horizon, g.n)
}

fn mc(m: &McArgs) -> McConfig {
    McConfig { hurst: m.grid.hurst, horizon: m.grid.horizon, steps: m.grid.n, paths: m.paths, seed: m.seed }
}

fn read(path: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Usage(format!("cannot read '{path}': {e}")))
}

pub fn run(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Kernel { grid: g, check, .. } => kernel_cmd(g, check),
        Command::Fbm { mc: m, method, export, .. } => fbm_cmd(m, method, *export),
        Command::Solve { grid: g, model: spec, x0, seed, path_index, .. } => solve_cmd(g, spec, *x0, *seed, *path_index),
        Command::Bismut { mc: m, model: spec, x0, y, f, control, fd_eps, .. } => {
            bismut_cmd(m, spec, *x0, *y, f, control, *fd_eps)
        }
        Command::Ibp { mc: m, model: spec, x0, y, f, .. } => ibp_cmd(m, spec, *x0, *y, f),
        Command::Harnack { mc: m, model: spec, variant, f, x0, y, p, delta, radii, .. } => {
            harnack_cmd(m, spec, variant, f, *x0, *y, *p, *delta, radii)
        }
        Command::Transport { mc: m, model: spec, x0, metric, u, theta, .. } => {
            transport_cmd(m, spec, *x0, metric, u, *theta)
        }
        Command::Maxineq { mc: m, phi, p, theta, .. } => {
            let report = check_maximal_inequality(parse(phi)?, *p, mc(m), *theta)?;
            Ok(Outcome::check(&report, json!({}), None))
        }
        Command::Selftest { .. } => unreachable!("selftest is dispatched separately"),
    }
}

fn kernel_cmd(g: &GridArgs, check: &str) -> Result<Outcome> {
    let which: KernelCheck = parse(check)?;
    let rows = check_table(which, grid(g)?, g.hurst)?;
    let (metric, tol) = match which {
        KernelCheck::Identity => ("max_abs_error", 1e-3),
        KernelCheck::Covariance => ("max_rel_error", 1e-3),
        KernelCheck::Representation => ("max_rel_error", 1e-7),
    };
    let err = |r: &kernel::CheckRow| match which {
        KernelCheck::Identity => r.error,
        _ => r.error / r.reference.abs().max(f64::MIN_POSITIVE),
    };
    let max = rows.iter().map(err).fold(0.0, f64::max);
    let mut table = Table::new(&["t", "s", "value", "reference", "error"]);
    for r in &rows {
        table.push(vec![r.t, r.s, r.value, r.reference, r.error]);
    }
    let pass = max <= tol;
    Ok(Outcome {
        results: json!({ "check": check, "rows": rows.len(), metric: max, "tolerance": tol }),
        pass: Some(pass),
        table: Some(table),
        summary: format!("kernel {check}: {metric} {max:.3e} (tolerance {tol:e}) {}", verdict(pass)),
    })
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Monte Carlo covariance of fBm at probe node pairs against `R_H`.
#[derive(Debug, Clone, Serialize)]
pub struct CovarianceProbe {
    pub t: f64,
    pub s: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
}

/// Covariance at all pairs of `nodes` from `paths` sampled paths, each
/// sampled path given as its values on `nodes`.
pub fn covariance_probes(grid: &TimeGrid, hurst: f64, nodes: &[usize], values: &[Vec<f64>]) -> Vec<CovarianceProbe> {
    let mut out = Vec::new();
    for a in 0..nodes.len() {
        for b in a..nodes.len() {
            let prod: Vec<f64> = values.iter().map(|v| v[a] * v[b]).collect();
            let (t, s) = (grid.t(nodes[a]), grid.t(nodes[b]));
            let (estimate, se) = (mean(&prod), std_error(&prod));
            let exact = covariance_rh(t, s, hurst);
            out.push(CovarianceProbe { t, s, estimate, std_error: se, exact, z: (estimate - exact) / se });
        }
    }
    out
}

fn fbm_cmd(m: &McArgs, method: &str, export: usize) -> Result<Outcome> {
    let cfg = mc(m);
    let g = cfg.validate()?;
    let nodes = kernel::covariance_probe_nodes(g.steps());
    let hurst = m.grid.hurst;
    let sampler: Box<dyn Fn(u64) -> Result<Vec<f64>> + Sync> = match method {
        "volterra" => {
            let w = build_weights(g, hurst)?;
            Box::new(move |k| Ok(fbm_from_wiener(&sample_wiener(g, cfg.seed, k), &w)?.values))
        }
        "cholesky" => {
            let ch = CholeskyFbm::new(g, hurst)?;
            Box::new(move |k| Ok(ch.sample(cfg.seed, k).values))
        }
        other => return Err(Error::Usage(format!("unknown fbm method '{other}' (expected volterra or cholesky)"))),
    };
    let sampled = par_paths(cfg.paths, |k| {
        let v = sampler(k)?;
        let probe: Vec<f64> = nodes.iter().map(|&i| v[i]).collect();
        Ok((probe, if (k as usize) < export { v } else { Vec::new() }))
    })
    .into_iter()
    .collect::<Result<Vec<(Vec<f64>, Vec<f64>)>>>()?;
    let (paths, mut exported): (Vec<Vec<f64>>, Vec<Vec<f64>>) = sampled.into_iter().unzip();
    exported.truncate(export.min(cfg.paths));
    let probes = covariance_probes(&g, hurst, &nodes, &paths);
    let worst = probes.iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    let mut header = vec!["t".to_string()];
    header.extend((0..exported.len()).map(|k| format!("path_{k}")));
    let mut table = Table { header, rows: Vec::new() };
    for i in 0..g.nodes() {
        let mut row = vec![g.t(i)];
        row.extend(exported.iter().map(|p| p[i]));
        table.push(row);
    }
    let pass = worst <= 3.0;
    Ok(Outcome {
        results: json!({ "method": method, "covariance_probes": probes, "max_abs_z": worst }),
        pass: Some(pass),
        table: Some(table),
        summary: format!("fbm {method}: max |z| {worst:.2} over covariance probes {}", verdict(pass)),
    })
}

fn solve_cmd(g: &GridArgs, spec: &str, x0: f64, seed: u64, path_index: u64) -> Result<Outcome> {
    let model = model(spec)?;
    let grid = grid(g)?;
    let w = build_weights(grid, g.hurst)?;
    let dw = sample_wiener(grid, seed, path_index);
    let path = solve_volterra(&*model, x0, &dw, &w)?;
    let mut results = json!({ "model": model.name(), "terminal": path.terminal() });
    let mut header = vec!["t", "x"];
    let em = (g.hurst == 0.5).then(|| euler_maruyama(&*model, x0, &dw));
    if let Some(em) = &em {
        let diff = path.values.iter().zip(&em.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        results["euler_maruyama_max_abs_diff"] = json!(diff);
        header.push("euler_maruyama");
    }
    let mut table = Table::new(&header);
    for i in 0..grid.nodes() {
        let mut row = vec![grid.t(i), path.values[i]];
        if let Some(em) = &em {
            row.push(em.values[i]);
        }
        table.push(row);
    }
    Ok(Outcome {
        summary: format!("solve {}: X_T = {:.6}", model.name(), path.terminal()),
        results,
        pass: None,
        table: Some(table),
    })
}

fn control(spec: &str) -> Result<ControlFunction> {
    match spec {
        "default" => Ok(ControlFunction::Default),
        s => match s.strip_prefix("table:") {
            Some(path) => ControlFunction::parse_table(&read(path)?),
            None => Err(Error::Usage(format!("unknown control '{s}' (expected default or table:FILE)"))),
        },
    }
}

fn bismut_cmd(m: &McArgs, spec: &str, x0: f64, y: f64, f: &str, ctrl: &str, fd_eps: f64) -> Result<Outcome> {
    let model = model(spec)?;
    let f: TestFunction = parse(f)?;
    let tri = gradient_triangle(&*model, x0, y, f, &control(ctrl)?, mc(m), fd_eps)?;
    let pass = tri.pass();
    let mut table = Table::new(&["estimate", "std_error"]);
    for e in [&tri.bismut, &tri.pathwise, &tri.finite_difference] {
        table.push(vec![e.value, e.std_error]);
    }
    Ok(Outcome {
        summary: format!(
            "bismut {:.6} ± {:.2e}, pathwise {:.6} ± {:.2e}, finite difference {:.6} ± {:.2e}: {}",
            tri.bismut.value,
            tri.bismut.std_error,
            tri.pathwise.value,
            tri.pathwise.std_error,
            tri.finite_difference.value,
            tri.finite_difference.std_error,
            verdict(pass)
        ),
        results: json!({ "model": model.name(), "f": f.to_string(), "triangle": tri }),
        pass: Some(pass),
        table: Some(table),
    })
}

/// Shift-weight estimate next to the direct mean of `f'(X_T) y`, plus the
/// Gaussian closed form when the model is `zero` and `f = sin`.
#[derive(Debug, Clone, Serialize)]
pub struct IbpOutcome {
    pub shift_weight: WeightedEstimate,
    pub direct: WeightedEstimate,
    pub closed_form: Option<f64>,
    pub agreements: Vec<Agreement>,
}

impl IbpOutcome {
    pub fn pass(&self) -> bool {
        self.agreements.iter().all(|a| a.pass)
    }
}

pub fn ibp_estimate(model: &dyn CoefficientModel, x0: f64, y: f64, f: TestFunction, cfg: McConfig) -> Result<IbpOutcome> {
    let ens = Ensemble::new(model, cfg)?;
    let s = ens.samples(x0, &SampleRequest { y, ibp: true, ..Default::default() })?;
    let w: Vec<f64> = s.iter().map(|p| p.ibp_weight).collect();
    let prod: Vec<f64> = s.iter().map(|p| f.value(p.x_t) * p.ibp_weight).collect();
    let direct: Vec<f64> = s.iter().map(|p| f.derivative(p.x_t) * y).collect();
    let shift_weight = WeightedEstimate::from_products(&prod, &w);
    let direct = WeightedEstimate::from_products(&direct, &vec![1.0; s.len()]);
    let closed_form = (model.name() == "zero" && f == TestFunction::Sin)
        .then(|| x0.cos() * (-cfg.horizon.powf(2.0 * cfg.hurst) / 2.0).exp() * y);
    let mut agreements = vec![Agreement::new("shift-weight", shift_weight.pair(), "direct", direct.pair())];
    if let Some(c) = closed_form {
        agreements.push(Agreement::new("shift-weight", shift_weight.pair(), "closed-form", (c, 0.0)));
    }
    Ok(IbpOutcome { shift_weight, direct, closed_form, agreements })
}

fn ibp_cmd(m: &McArgs, spec: &str, x0: f64, y: f64, f: &str) -> Result<Outcome> {
    let model = model(spec)?;
    let f: TestFunction = parse(f)?;
    let out = ibp_estimate(&*model, x0, y, f, mc(m))?;
    let pass = out.pass();
    Ok(Outcome {
        summary: format!(
            "ibp {:.6} ± {:.2e}, direct {:.6}{}: {}",
            out.shift_weight.value,
            out.shift_weight.std_error,
            out.direct.value,
            out.closed_form.map(|c| format!(", closed form {c:.6}")).unwrap_or_default(),
            verdict(pass)
        ),
        results: json!({ "model": model.name(), "f": f.to_string(), "ibp": out }),
        pass: Some(pass),
        table: None,
    })
}

/// Runs one inequality variant on an existing ensemble.
pub fn harnack_variant(
    ens: &Ensemble<'_>,
    variant: &str,
    f: TestFunction,
    x0: f64,
    y: f64,
    p: f64,
    delta: f64,
    radii: &[f64],
) -> Result<(CheckReport, Option<ineq::FellerProbe>)> {
    let report = match variant {
        "gradient" => ineq::check_gradient_bound(ens, x0, y, f)?,
        "entropy" => ineq::check_entropy_gradient(ens, x0, y, f, delta)?,
        "harnack" => ineq::check_harnack(ens, x0, y, f, p)?,
        "log" | "log-harnack" => ineq::check_log_harnack(ens, x0, y, f)?,
        "shift" => ineq::check_shift_harnack(ens, x0, y, f, p)?,
        "shift-log" => ineq::check_shift_log_harnack(ens, x0, y, f)?,
        "feller" => {
            let probe = ineq::probe_strong_feller(ens, x0, f, radii)?;
            return Ok((probe.report.clone(), Some(probe)));
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown variant '{other}' (expected gradient, entropy, harnack, log, shift, shift-log or feller)"
            )))
        }
    };
    Ok((report, None))
}

#[allow(clippy::too_many_arguments)]
fn harnack_cmd(
    m: &McArgs,
    spec: &str,
    variant: &str,
    f: &str,
    x0: f64,
    y: f64,
    p: f64,
    delta: f64,
    radii: &[f64],
) -> Result<Outcome> {
    let model = model(spec)?;
    let f: TestFunction = parse(f)?;
    let ens = Ensemble::new(&*model, mc(m))?;
    let (report, probe) = harnack_variant(&ens, variant, f, x0, y, p, delta, radii)?;
    let table = probe.as_ref().map(|pr| {
        let mut t = Table::new(&["radius", "difference", "std_error", "envelope", "pass"]);
        for r in &pr.rows {
            t.push(vec![r.radius, r.difference, r.std_error, r.envelope, f64::from(u8::from(r.pass))]);
        }
        t
    });
    let extra = json!({ "variant": variant, "model": model.name(), "f": f.to_string(), "feller_rows": probe.map(|p| p.rows) });
    Ok(Outcome::check(&report, extra, table))
}

fn transport_cmd(m: &McArgs, spec: &str, x0: f64, metric: &str, u: &str, theta: Option<f64>) -> Result<Outcome> {
    let model = model(spec)?;
    let metric: Metric = parse(metric)?;
    let shift = match u.strip_prefix("table:") {
        Some(path) => ShiftSpec::parse_table(&read(path)?)?,
        None => parse::<ShiftSpec>(u)?,
    };
    let report = check_t2(&*model, x0, &shift, metric, mc(m), theta)?;
    Ok(Outcome::check(&report, json!({ "model": model.name(), "shift": shift }), None))
}
