//! Verdicts for one-sided Monte Carlo inequality checks.

use std::collections::BTreeMap;

use serde::Serialize;

/// Number of standard errors of statistical slack granted to every check.
pub const SE_SLACK: f64 = 3.0;
/// Relative round-off slack for checks decided on a shared sample.
pub const EXACT_SLACK: f64 = 1e-12;

/// Outcome of checking `lhs <= rhs`.
///
/// Statistical checks pass when `lhs <= rhs + tol·|rhs| + 3·se(rhs - lhs)`,
/// where the standard error of the difference is computed on the common
/// paths. Exact checks (both sides are deterministic functions of one shared
/// sample for which the inequality holds identically) allow round-off only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// Standard error of `rhs - lhs`.
    pub diff_se: f64,
    pub tolerance: f64,
    /// `rhs + tol·|rhs| - lhs`; non-negative means non-violation before slack.
    pub margin: f64,
    pub margin_in_se: f64,
    pub exact: bool,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckReport {
    pub fn statistical(
        name: impl Into<String>,
        (lhs, lhs_se): (f64, f64),
        (rhs, rhs_se): (f64, f64),
        diff_se: f64,
        tolerance: f64,
    ) -> Self {
        let margin = rhs + tolerance * rhs.abs() - lhs;
        let pass = margin + SE_SLACK * diff_se >= 0.0;
        Self {
            name: name.into(),
            lhs,
            lhs_se,
            rhs,
            rhs_se,
            diff_se,
            tolerance,
            margin,
            margin_in_se: ratio(margin, diff_se),
            exact: false,
            pass,
            constants: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn exact(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let pass = margin >= -EXACT_SLACK * lhs.abs().max(rhs.abs());
        Self {
            name: name.into(),
            lhs,
            lhs_se: 0.0,
            rhs,
            rhs_se: 0.0,
            diff_se: 0.0,
            tolerance: 0.0,
            margin,
            margin_in_se: ratio(margin, 0.0),
            exact: true,
            pass,
            constants: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn with_constant(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Fails the check outright, recording why.
    pub fn fail_with(mut self, note: impl Into<String>) -> Self {
        self.pass = false;
        self.notes.push(note.into());
        self
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

fn ratio(margin: f64, se: f64) -> f64 {
    if se > 0.0 {
        margin / se
    } else if margin >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Two estimates of the same quantity compared within `3·sqrt(se_a² + se_b²)`,
/// plus round-off when both are (nearly) deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub left: String,
    pub right: String,
    pub difference: f64,
    pub combined_se: f64,
    pub pass: bool,
}

impl Agreement {
    pub fn new(left: &str, a: (f64, f64), right: &str, b: (f64, f64)) -> Self {
        let difference = a.0 - b.0;
        let combined_se = a.1.hypot(b.1);
        Self {
            left: left.into(),
            right: right.into(),
            difference,
            combined_se,
            pass: difference.abs() <= SE_SLACK * combined_se + EXACT_SLACK * a.0.abs().max(b.0.abs()),
        }
    }
}
