//! Solvers for `min_θ ½‖y − θ‖² + λ‖D θ‖₁` on a lattice.
//!
//! The ADMM family splits on the factorization `D = M · D^(j)`; the split index
//! `j` decides which subproblem carries the structure. Proximal Dykstra and
//! Douglas–Rachford work axis by axis. The dual reference solver certifies its
//! answers with an explicit duality gap.

mod admm;
mod cg;
mod dr;
mod dual;
mod dykstra;
mod kind;

use serde::Serialize;

use crate::error::{KtfError, Result};
use crate::lattice::GridSignal;
use crate::penalty::KroneckerPenalty;

pub use admm::{
    ktf_admm, ktf_admm_warm, theta_update_cg, theta_update_dct, z_update, AdmmConfig, AdmmState,
};
pub(crate) use cg::cg_solve;
pub use dr::{douglas_rachford, douglas_rachford_with, dr_start_from_dual};
pub use dual::{dual_reference_solve, dual_reference_with, DualRefConfig};
pub use dykstra::{prox_dykstra, prox_dykstra_with};
pub use kind::{solve, SolveOptions, SolverKind};

/// One sample of an objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub iter: usize,
    pub seconds: f64,
    pub objective: f64,
}

/// Output of every solver.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta: GridSignal,
    /// `½‖y − θ‖² + λ‖Dθ‖₁` recomputed from `theta`.
    pub objective: f64,
    pub iters: usize,
    pub primal_residuals: Vec<f64>,
    pub dual_residuals: Vec<f64>,
    pub converged: bool,
    /// Dual vector `u` with `θ ≈ y − Dᵀu` and `‖u‖_∞ ≤ λ`, in penalty row order.
    pub dual_u: Option<Vec<f64>>,
    /// Objective over wall time; empty unless requested.
    pub trace: Vec<TracePoint>,
}

/// Iteration controls shared by proximal Dykstra and Douglas–Rachford.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingConfig {
    /// Full cycles (Dykstra) or iterations (Douglas–Rachford).
    pub iters: usize,
    /// Optional early stop once `‖θ_t − θ_{t−1}‖ ≤ tol · max(1, ‖θ_t‖)`.
    pub tol: Option<f64>,
    /// Duality-gap target of the univariate interior-point solves.
    pub inner_tol: f64,
    pub trace: bool,
}

impl SplittingConfig {
    pub fn iters(iters: usize) -> Self {
        Self {
            iters,
            tol: None,
            inner_tol: 1e-12,
            trace: false,
        }
    }
}

/// `½‖y − θ‖² + λ‖D^(k+1) θ‖₁`.
pub fn objective(y: &GridSignal, theta: &GridSignal, k: usize, lambda: f64) -> Result<f64> {
    if y.shape() != theta.shape() {
        return Err(KtfError::ShapeMismatch {
            expected: y.len(),
            got: theta.len(),
        });
    }
    let pen = KroneckerPenalty::new(y.shape(), k)?;
    Ok(objective_with(&pen, y.values(), theta.values(), lambda))
}

pub(crate) fn objective_with(pen: &KroneckerPenalty, y: &[f64], theta: &[f64], lambda: f64) -> f64 {
    let fit: f64 = y
        .iter()
        .zip(theta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        * 0.5;
    if lambda == 0.0 {
        return fit;
    }
    let tv: f64 = pen.apply_slice(theta).iter().map(|v| v.abs()).sum();
    fit + lambda * tv
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(KtfError::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    Ok(())
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Result for `λ = 0` or an empty penalty: `θ = y`.
pub(crate) fn identity_fit(y: &GridSignal, rows: usize) -> FitResult {
    FitResult {
        theta: y.clone(),
        objective: 0.0,
        iters: 0,
        primal_residuals: Vec::new(),
        dual_residuals: Vec::new(),
        converged: true,
        dual_u: Some(vec![0.0; rows]),
        trace: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeShape;

    #[test]
    fn objective_examples() {
        let shape = LatticeShape::uniform(&[3, 3]).unwrap();
        let y = GridSignal::new(
            shape.clone(),
            (0..9).map(|i| (i * i) as f64 / 10.0).collect(),
        )
        .unwrap();
        let pen = KroneckerPenalty::new(&shape, 0).unwrap();
        let ktv = pen.ktv(&y).unwrap();
        assert!((objective(&y, &y, 0, 0.7).unwrap() - 0.7 * ktv).abs() < 1e-12);
        let zero = GridSignal::zeros(shape);
        let half_sq = 0.5 * y.values().iter().map(|v| v * v).sum::<f64>();
        assert!((objective(&y, &zero, 1, 0.0).unwrap() - half_sq).abs() < 1e-12);
        // affine in λ at fixed θ
        let theta = y
            .with_values(y.values().iter().map(|v| v.sqrt()).collect())
            .unwrap();
        let f = |l: f64| objective(&y, &theta, 1, l).unwrap();
        assert!((f(0.5) - 0.5 * (f(0.0) + f(1.0))).abs() < 1e-12);
    }
}
