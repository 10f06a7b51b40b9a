//! Order-stable reductions and standard errors for Monte Carlo samples.

/// Pairwise (cascade) summation. The result depends only on the order of
/// `xs`, never on how the values were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance (zero for fewer than two values).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (n - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl MeanEstimate {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), std_error: std_error(xs) }
    }
}

/// Standard error of a smooth function `g` of several sample means, by the
/// delta method: `grad` holds `∂g/∂m_k` at the sample means and `columns[k]`
/// the per-path values whose mean is `m_k`. All columns come from the same
/// paths, so their correlation is accounted for.
pub fn delta_method_se(columns: &[&[f64]], grad: &[f64]) -> f64 {
    assert_eq!(columns.len(), grad.len(), "one gradient entry per column");
    let Some(first) = columns.first() else {
        return 0.0;
    };
    let n = first.len();
    let influence: Vec<f64> = (0..n)
        .map(|p| columns.iter().zip(grad).map(|(c, g)| g * c[p]).sum())
        .collect();
    std_error(&influence)
}
