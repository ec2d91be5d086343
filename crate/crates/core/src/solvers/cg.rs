//! Conjugate gradients for symmetric positive (semi)definite operators.

/// Outcome of [`cg_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct CgOutcome {
    pub iters: usize,
    pub converged: bool,
    pub rel_residual: f64,
}

/// Solves `A x = b` in place from the initial guess in `x`, stopping at `‖b − A x‖ ≤ tol · ‖b‖`.
///
/// Singular but consistent systems converge to a solution in `x₀ + range(A)`.
pub(crate) fn cg_solve<A>(
    apply: A,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> CgOutcome
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iters: 0,
            converged: true,
            rel_residual: 0.0,
        };
    }
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let target = tol * bnorm;
    for it in 0..max_iters {
        if rr.sqrt() <= target {
            return CgOutcome {
                iters: it,
                converged: true,
                rel_residual: rr.sqrt() / bnorm,
            };
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    CgOutcome {
        iters: max_iters,
        converged: rr.sqrt() <= target,
        rel_residual: rr.sqrt() / bnorm,
    }
}
