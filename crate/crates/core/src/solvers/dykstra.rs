//! Proximal Dykstra over the axis-wise penalties `r_a(θ) = λ Σ_lines ‖D θ_line‖₁`.
//!
//! θ⁰ = y and one correction per axis, initially 0. Step `a` of a cycle:
//! θ ← prox_{r_a}(θ + z_a), z_a ← (θ_old + z_a) − θ.

use std::time::Instant;

use crate::error::{KtfError, Result};
use crate::lattice::GridSignal;
use crate::penalty::KroneckerPenalty;
use crate::prox::prox_lines;

use super::{
    check_lambda, identity_fit, norm2, objective_with, FitResult, SplittingConfig, TracePoint,
};

/// Runs `iters` full Dykstra cycles.
pub fn prox_dykstra(y: &GridSignal, k: usize, lambda: f64, iters: usize) -> Result<FitResult> {
    prox_dykstra_with(y, k, lambda, &SplittingConfig::iters(iters))
}

pub fn prox_dykstra_with(
    y: &GridSignal,
    k: usize,
    lambda: f64,
    config: &SplittingConfig,
) -> Result<FitResult> {
    check_lambda(lambda)?;
    let shape = y.shape();
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let pen = KroneckerPenalty::new(shape, k)?;
    let yv = y.values();
    if lambda == 0.0 || pen.rows() == 0 {
        let mut fit = identity_fit(y, pen.rows());
        fit.objective = objective_with(&pen, yv, yv, lambda);
        return Ok(fit);
    }
    let dims = shape.dims();
    let d = dims.len();
    let n = shape.len();
    let start = Instant::now();
    let mut theta = yv.to_vec();
    let mut z = vec![vec![0.0; n]; d];
    let mut dual = vec![0.0; pen.rows()];
    let mut x = vec![0.0; n];
    let mut prev = vec![0.0; n];
    let mut primal_residuals = Vec::new();
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = config.tol.is_none();

    for cycle in 1..=config.iters {
        iters = cycle;
        prev.copy_from_slice(&theta);
        for (axis, za) in z.iter_mut().enumerate() {
            for i in 0..n {
                x[i] = theta[i] + za[i];
            }
            let range = pen.block_range(axis);
            prox_lines(
                dims,
                axis,
                k + 1,
                lambda,
                &x,
                &mut theta,
                &mut dual[range],
                config.inner_tol,
            )?;
            for i in 0..n {
                za[i] = x[i] - theta[i];
            }
        }
        let step: Vec<f64> = theta.iter().zip(&prev).map(|(a, b)| a - b).collect();
        let change = norm2(&step);
        primal_residuals.push(change);
        if config.trace {
            trace.push(TracePoint {
                iter: cycle,
                seconds: start.elapsed().as_secs_f64(),
                objective: objective_with(&pen, yv, &theta, lambda),
            });
        }
        if let Some(tol) = config.tol {
            if change <= tol * norm2(&theta).max(1.0) {
                converged = true;
                break;
            }
        }
    }
    Ok(FitResult {
        objective: objective_with(&pen, yv, &theta, lambda),
        theta: y.with_values(theta)?,
        iters,
        primal_residuals,
        dual_residuals: Vec::new(),
        converged,
        dual_u: Some(dual),
        trace,
    })
}
