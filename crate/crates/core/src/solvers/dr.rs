//! Douglas–Rachford on the dual of the two-axis split, for `d = 2`.
//!
//! With `r_a` the axis-`a` penalty and `C_a` its dual ball, the dual is
//! `min_s h(s) + ι_{C_2}(s)` where `h(s) = ½‖prox_{r_1}(y − s)‖²`. Then
//! `prox_{ι_{C_2}}(x) = x − prox_{r_2}(x)` and `prox_h(x) = x + ½ prox_{r_1}(y − x)`
//! by Moreau decomposition; the primal is `θ = prox_{r_1}(y − s)`.

use std::time::Instant;

use crate::error::{KtfError, Result};
use crate::lattice::GridSignal;
use crate::penalty::KroneckerPenalty;
use crate::prox::prox_lines;

use super::{
    check_lambda, identity_fit, norm2, objective_with, FitResult, SplittingConfig, TracePoint,
};

struct Split<'a> {
    dims: &'a [usize],
    order: usize,
    lambda: f64,
    tol: f64,
}

impl Split<'_> {
    fn prox(&self, axis: usize, x: &[f64], out: &mut [f64], dual: &mut [f64]) -> Result<()> {
        prox_lines(
            self.dims,
            axis,
            self.order,
            self.lambda,
            x,
            out,
            dual,
            self.tol,
        )
    }
}

/// Runs `iters` Douglas–Rachford iterations from `z = 0`.
pub fn douglas_rachford(y: &GridSignal, k: usize, lambda: f64, iters: usize) -> Result<FitResult> {
    douglas_rachford_with(y, k, lambda, &SplittingConfig::iters(iters), None)
}

/// Douglas–Rachford from an optional starting point `z0` of the auxiliary variable.
pub fn douglas_rachford_with(
    y: &GridSignal,
    k: usize,
    lambda: f64,
    config: &SplittingConfig,
    z0: Option<&[f64]>,
) -> Result<FitResult> {
    check_lambda(lambda)?;
    let shape = y.shape();
    if shape.ndim() != 2 {
        return Err(KtfError::InvalidArgument(
            "Douglas-Rachford is implemented for 2-dimensional lattices".into(),
        ));
    }
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let pen = KroneckerPenalty::new(shape, k)?;
    let yv = y.values();
    let n = shape.len();
    if lambda == 0.0 || pen.rows() == 0 {
        let mut fit = identity_fit(y, pen.rows());
        fit.objective = objective_with(&pen, yv, yv, lambda);
        fit.iters = 1;
        return Ok(fit);
    }
    let split = Split {
        dims: shape.dims(),
        order: k + 1,
        lambda,
        tol: config.inner_tol,
    };
    let (r0, r1) = (pen.block_range(0), pen.block_range(1));
    let mut z = match z0 {
        Some(z0) if z0.len() == n => z0.to_vec(),
        Some(z0) => {
            return Err(KtfError::ShapeMismatch {
                expected: n,
                got: z0.len(),
            })
        }
        None => vec![0.0; n],
    };
    let start = Instant::now();
    let mut dual = vec![0.0; pen.rows()];
    let mut scratch_dual = vec![0.0; pen.rows()];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut theta = yv.to_vec();
    let mut prev = yv.to_vec();
    let mut primal_residuals = Vec::new();
    let mut trace = Vec::new();
    let mut iters = 0;
    let mut converged = config.tol.is_none();

    for it in 1..=config.iters {
        iters = it;
        split.prox(1, &z, &mut p, &mut dual[r1.clone()])?;
        for i in 0..n {
            s[i] = z[i] - p[i];
            x[i] = yv[i] - (2.0 * s[i] - z[i]);
        }
        split.prox(0, &x, &mut p, &mut scratch_dual[r0.clone()])?;
        for i in 0..n {
            let ph = (2.0 * s[i] - z[i]) + 0.5 * p[i];
            z[i] += ph - s[i];
        }
        let need_theta = config.trace || config.tol.is_some() || it == config.iters;
        if need_theta {
            for i in 0..n {
                x[i] = yv[i] - s[i];
            }
            prev.copy_from_slice(&theta);
            split.prox(0, &x, &mut theta, &mut dual[r0.clone()])?;
            let step: Vec<f64> = theta.iter().zip(&prev).map(|(a, b)| a - b).collect();
            let change = norm2(&step);
            primal_residuals.push(change);
            if config.trace {
                trace.push(TracePoint {
                    iter: it,
                    seconds: start.elapsed().as_secs_f64(),
                    objective: objective_with(&pen, yv, &theta, lambda),
                });
            }
            if let Some(tol) = config.tol {
                if it > 1 && change <= tol * norm2(&theta).max(1.0) {
                    converged = true;
                    break;
                }
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

/// Auxiliary point whose Douglas–Rachford iteration is stationary at the dual solution `u`.
///
/// With `s = D_2ᵀ u_2` (second-axis block), the fixed point is `z = s + prox_{r_1}(y − s)`.
pub fn dr_start_from_dual(
    y: &GridSignal,
    k: usize,
    lambda: f64,
    u: &[f64],
    inner_tol: f64,
) -> Result<Vec<f64>> {
    let shape = y.shape();
    let pen = KroneckerPenalty::new(shape, k)?;
    if u.len() != pen.rows() || shape.ndim() != 2 {
        return Err(KtfError::ShapeMismatch {
            expected: pen.rows(),
            got: u.len(),
        });
    }
    let mut only_second = vec![0.0; pen.rows()];
    let r1 = pen.block_range(1);
    only_second[r1.clone()].copy_from_slice(&u[r1]);
    let s = pen.apply_transpose_slice(&only_second);
    let x: Vec<f64> = y.values().iter().zip(&s).map(|(a, b)| a - b).collect();
    let mut p = vec![0.0; x.len()];
    let mut dual = vec![0.0; pen.block_range(0).len()];
    prox_lines(
        shape.dims(),
        0,
        k + 1,
        lambda,
        &x,
        &mut p,
        &mut dual,
        inner_tol,
    )?;
    Ok(s.iter().zip(&p).map(|(a, b)| a + b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeShape;
    use crate::solvers::dual_reference_solve;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64) -> GridSignal {
        let shape = LatticeShape::uniform(&[8, 8]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GridSignal::new(
            shape,
            (0..64).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn lambda_zero_one_iteration() {
        let y = random(1);
        let fit = douglas_rachford(&y, 1, 0.0, 1).unwrap();
        assert_eq!(fit.theta, y);
    }

    #[test]
    fn matches_reference() {
        for k in 0..=1 {
            let y = random(2 + k as u64);
            let reference = dual_reference_solve(&y, k, 0.5, 1e-10).unwrap();
            let fit = douglas_rachford(&y, k, 0.5, 500).unwrap();
            let rel = (fit.objective - reference.objective).abs() / reference.objective;
            assert!(rel <= 1e-3, "k={k}: {rel}");
        }
    }

    #[test]
    fn reference_is_a_fixed_point() {
        let y = random(7);
        let reference = dual_reference_solve(&y, 1, 0.5, 1e-12).unwrap();
        let z0 = dr_start_from_dual(&y, 1, 0.5, reference.dual_u.as_ref().unwrap(), 1e-12).unwrap();
        let fit =
            douglas_rachford_with(&y, 1, 0.5, &SplittingConfig::iters(20), Some(&z0)).unwrap();
        assert!((fit.objective - reference.objective).abs() <= 1e-6 * reference.objective);
    }
}
