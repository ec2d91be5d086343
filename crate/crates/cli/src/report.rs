//! JSON fit reports; the schema lives in `docs/fit-report.schema.json`.

use serde::Serialize;

use ktf::GridSignal;

/// Version of the report layout; bump on breaking changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub input: String,
    pub dims: Vec<usize>,
    pub n: usize,
    pub k: usize,
    pub solver: String,
    /// Noise level estimate used by the risk proxy.
    pub sigma_hat: f64,
    pub active_tol: f64,
    pub fits: Vec<FitEntry>,
}

#[derive(Debug, Serialize)]
pub struct FitEntry {
    pub lambda: f64,
    pub output: String,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub ktv: f64,
    pub dof: usize,
    /// `‖y − θ̂‖² + 2σ̂²·df − nσ̂²`.
    pub risk_proxy: f64,
    pub seconds: f64,
}

/// Robust noise scale from finest-scale differences along every axis.
///
/// For i.i.d. `N(0, σ²)` noise a first difference has standard deviation
/// `σ√2`, and the median absolute value of a centered normal is `0.6745`
/// standard deviations. This is an estimate, not part of the model.
pub fn sigma_mad(y: &GridSignal) -> f64 {
    let shape = y.shape();
    let values = y.values();
    let mut diffs = Vec::new();
    for axis in 0..shape.ndim() {
        let stride = shape.strides()[axis];
        let n = shape.dims()[axis];
        for (flat, v) in values.iter().enumerate() {
            if (flat / stride) % n + 1 < n {
                diffs.push((values[flat + stride] - v).abs());
            }
        }
    }
    if diffs.is_empty() {
        return 0.0;
    }
    let mid = diffs.len() / 2;
    let (_, median, _) = diffs.select_nth_unstable_by(mid, f64::total_cmp);
    *median / (0.674_489_750_196_081_7 * std::f64::consts::SQRT_2)
}

pub fn risk_proxy(y: &GridSignal, fit: &GridSignal, sigma: f64, df: usize) -> f64 {
    let rss: f64 = y
        .values()
        .iter()
        .zip(fit.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let s2 = sigma * sigma;
    rss + 2.0 * s2 * df as f64 - y.len() as f64 * s2
}
