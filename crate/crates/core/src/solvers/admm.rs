//! Specialized ADMM on the split `D = M · D^(j)`.
//!
//! Scaled form with constraint `z = D^(j) θ`:
//! θ ← (I + ρ D^(j)ᵀD^(j))⁻¹ (y + ρ D^(j)ᵀ(z − u)),
//! z ← prox of `(λ/ρ)‖M ·‖₁` at `D^(j)θ + u` (line-wise, order `k+1−j`),
//! u ← u + D^(j)θ − z.

use std::time::Instant;

use crate::dct::SeparableDct;
use crate::error::{KtfError, Result};
use crate::lattice::{GridSignal, LatticeShape};
use crate::penalty::{BlockDiagDiff, KroneckerPenalty};
use crate::prox::prox_lines;

use super::{cg_solve, check_lambda, identity_fit, norm2, objective_with, FitResult, TracePoint};

const CG_MAX_ITERS: usize = 10_000;

/// Parameters of [`ktf_admm`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmConfig {
    /// Split index `0..=k+1`.
    pub j: usize,
    /// Initial penalty parameter; `None` means `ρ₀ = λ`.
    pub rho0: Option<f64>,
    pub adaptive: bool,
    /// Residual-balance ratio that triggers a ρ change.
    pub mu: f64,
    /// Factor applied to ρ on a change.
    pub tau: f64,
    pub max_iters: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Relative residual target of CG θ-updates (`j ≥ 2`).
    pub cg_tol: f64,
    /// Duality-gap target of interior-point z-updates, relative to `max(1, ‖line‖²)`.
    pub inner_tol: f64,
    /// Record the objective after every iteration.
    pub trace: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            j: 1,
            rho0: None,
            adaptive: true,
            mu: 10.0,
            tau: 2.0,
            max_iters: 10_000,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            cg_tol: 1e-10,
            inner_tol: 1e-10,
            trace: false,
        }
    }
}

impl AdmmConfig {
    pub fn with_split(j: usize) -> Self {
        Self {
            j,
            ..Self::default()
        }
    }

    /// Type 0: `j = 0`, θ-update is a rescaling.
    pub fn type0() -> Self {
        Self::with_split(0)
    }

    /// Type I: `j = 1`, θ-update by DCT.
    pub fn type1() -> Self {
        Self::with_split(1)
    }

    /// Type II: `j = k`, z-update by 1-d total variation DP.
    pub fn type2(k: usize) -> Self {
        Self::with_split(k)
    }

    /// Type III: `j = k+1`, z-update by soft-thresholding.
    pub fn soft(k: usize) -> Self {
        Self::with_split(k + 1)
    }
}

/// Iterates carried between fits for warm starts along a λ grid.
///
/// Only meaningful for the same lattice, `k` and split index.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub theta: Vec<f64>,
    pub z: Vec<f64>,
    /// Scaled dual variable.
    pub u: Vec<f64>,
    pub rho: f64,
}

enum ThetaSolver {
    /// `D^(0)ᵀD^(0) = d I`.
    Scale(f64),
    Dct(SeparableDct),
    Cg,
}

impl ThetaSolver {
    fn new(j: usize, shape: &LatticeShape) -> Self {
        match j {
            0 => Self::Scale(shape.ndim() as f64),
            1 => Self::Dct(SeparableDct::new(shape.dims())),
            _ => Self::Cg,
        }
    }

    fn solve(
        &self,
        inner: &KroneckerPenalty,
        rhs: &[f64],
        rho: f64,
        theta: &mut [f64],
        cg_tol: f64,
    ) -> Result<()> {
        match self {
            Self::Scale(d) => {
                let s = 1.0 / (1.0 + rho * d);
                for (t, r) in theta.iter_mut().zip(rhs) {
                    *t = r * s;
                }
            }
            Self::Dct(dct) => {
                theta.copy_from_slice(rhs);
                dct.solve_shifted_laplacian(theta, 1.0, rho);
            }
            Self::Cg => cg_theta(inner, rhs, rho, theta, cg_tol)?,
        }
        Ok(())
    }
}

fn cg_theta(
    inner: &KroneckerPenalty,
    rhs: &[f64],
    rho: f64,
    theta: &mut [f64],
    tol: f64,
) -> Result<()> {
    let mut tmp = vec![0.0; inner.rows()];
    let tmp_cell = std::cell::RefCell::new(&mut tmp);
    let apply = |x: &[f64], out: &mut [f64]| {
        let mut t = tmp_cell.borrow_mut();
        inner.apply_into(x, &mut t);
        inner.apply_transpose_into(&t, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + rho * *o;
        }
    };
    let out = cg_solve(apply, rhs, theta, tol, CG_MAX_ITERS);
    if !out.converged {
        return Err(KtfError::NotConverged {
            solver: "theta_update_cg",
            iters: out.iters,
            residual: out.rel_residual,
        });
    }
    Ok(())
}

/// Solves `(I + ρL) x = rhs`, `L` the lattice first-difference Laplacian, by DCT.
pub fn theta_update_dct(rhs: &GridSignal, rho: f64) -> Result<GridSignal> {
    if !(rho >= 0.0) {
        return Err(KtfError::InvalidArgument("rho must be nonnegative".into()));
    }
    let dct = SeparableDct::new(rhs.shape().dims());
    let mut x = rhs.values().to_vec();
    dct.solve_shifted_laplacian(&mut x, 1.0, rho);
    rhs.with_values(x)
}

/// Solves `(I + ρ D^(j)ᵀD^(j)) x = rhs` by conjugate gradients to relative residual `tol`.
pub fn theta_update_cg(
    rhs: &GridSignal,
    rho: f64,
    inner: &KroneckerPenalty,
    tol: f64,
) -> Result<GridSignal> {
    if !(rho >= 0.0) || !(tol > 0.0) {
        return Err(KtfError::InvalidArgument(
            "rho must be nonnegative and tol positive".into(),
        ));
    }
    if inner.shape() != rhs.shape() {
        return Err(KtfError::ShapeMismatch {
            expected: inner.cols(),
            got: rhs.len(),
        });
    }
    let mut x = rhs.values().to_vec();
    cg_theta(inner, rhs.values(), rho, &mut x, tol)?;
    rhs.with_values(x)
}

/// Prox of `t‖M·‖₁` on the `D^(j)` output layout; writes primal `z` and line duals `w`.
fn z_update_into(
    outer: &BlockDiagDiff,
    v: &[f64],
    t: f64,
    tol: f64,
    z: &mut [f64],
    w: &mut [f64],
) -> Result<()> {
    for b in outer.blocks() {
        let in_range = b.in_offset..b.in_offset + b.in_len();
        let out_range = b.out_offset..b.out_offset + b.out_len();
        prox_lines(
            &b.dims,
            b.axis,
            b.diff.order(),
            t,
            &v[in_range.clone()],
            &mut z[in_range],
            &mut w[out_range],
            tol,
        )?;
    }
    Ok(())
}

/// Evaluates the prox of `t‖M^(k+1−j) ·‖₁` at `w`, a vector in the `D^(j)` output layout.
pub fn z_update(
    shape: &LatticeShape,
    k: usize,
    j: usize,
    w: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let pen = KroneckerPenalty::new(shape, k)?;
    let dec = pen.decompose(j)?;
    if w.len() != dec.outer.cols() {
        return Err(KtfError::ShapeMismatch {
            expected: dec.outer.cols(),
            got: w.len(),
        });
    }
    let mut z = vec![0.0; w.len()];
    let mut dual = vec![0.0; dec.outer.rows()];
    z_update_into(&dec.outer, w, t, tol, &mut z, &mut dual)?;
    Ok(z)
}

/// Solves the KTF problem by ADMM on the split `config.j`.
pub fn ktf_admm(y: &GridSignal, k: usize, lambda: f64, config: &AdmmConfig) -> Result<FitResult> {
    ktf_admm_warm(y, k, lambda, config, None).map(|(fit, _)| fit)
}

/// [`ktf_admm`] started from `warm` (when given); also returns the final iterates.
pub fn ktf_admm_warm(
    y: &GridSignal,
    k: usize,
    lambda: f64,
    config: &AdmmConfig,
    warm: Option<&AdmmState>,
) -> Result<(FitResult, AdmmState)> {
    check_lambda(lambda)?;
    let shape = y.shape();
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let j = config.j;
    if j > k + 1 {
        return Err(KtfError::SplitOutOfRange { j, max: k + 1 });
    }
    let pen = KroneckerPenalty::new(shape, k)?;
    let dec = pen.decompose(j)?;
    let inner = &dec.inner;
    let n = shape.len();
    let mj = inner.rows();
    let yv = y.values();

    if lambda == 0.0 || pen.rows() == 0 {
        let state = AdmmState {
            theta: yv.to_vec(),
            z: inner.apply_slice(yv),
            u: vec![0.0; mj],
            rho: config.rho0.unwrap_or(lambda),
        };
        let mut fit = identity_fit(y, pen.rows());
        fit.objective = objective_with(&pen, yv, yv, lambda);
        return Ok((fit, state));
    }

    let (mut theta, mut z, mut u, mut rho) = match warm {
        Some(s) if s.theta.len() == n && s.z.len() == mj && s.u.len() == mj && s.rho > 0.0 => {
            (s.theta.clone(), s.z.clone(), s.u.clone(), s.rho)
        }
        _ => (
            yv.to_vec(),
            inner.apply_slice(yv),
            vec![0.0; mj],
            config.rho0.unwrap_or(lambda),
        ),
    };
    if !(rho > 0.0) {
        return Err(KtfError::InvalidArgument("rho0 must be positive".into()));
    }

    let solver = ThetaSolver::new(j, shape);
    let start = Instant::now();
    let mut rhs = vec![0.0; n];
    let mut diff = vec![0.0; mj];
    let mut a_theta = vec![0.0; mj];
    let mut v = vec![0.0; mj];
    let mut z_old = vec![0.0; mj];
    let mut w = vec![0.0; pen.rows()];
    let mut tmp_n = vec![0.0; n];
    let mut rho_used = rho;
    let mut primal_residuals = Vec::new();
    let mut dual_residuals = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iters = 0;
    let sqrt_m = (mj as f64).sqrt();
    let sqrt_n = (n as f64).sqrt();

    for it in 1..=config.max_iters {
        iters = it;
        for i in 0..mj {
            diff[i] = z[i] - u[i];
        }
        inner.apply_transpose_into(&diff, &mut rhs);
        for i in 0..n {
            rhs[i] = yv[i] + rho * rhs[i];
        }
        solver.solve(inner, &rhs, rho, &mut theta, config.cg_tol)?;

        inner.apply_into(&theta, &mut a_theta);
        for i in 0..mj {
            v[i] = a_theta[i] + u[i];
        }
        z_old.copy_from_slice(&z);
        z_update_into(
            &dec.outer,
            &v,
            lambda / rho,
            config.inner_tol,
            &mut z,
            &mut w,
        )?;
        rho_used = rho;
        for i in 0..mj {
            u[i] = v[i] - z[i];
            diff[i] = a_theta[i] - z[i];
        }
        let r_norm = norm2(&diff);
        for i in 0..mj {
            diff[i] = z[i] - z_old[i];
        }
        inner.apply_transpose_into(&diff, &mut tmp_n);
        let s_norm = rho * norm2(&tmp_n);
        inner.apply_transpose_into(&u, &mut tmp_n);
        let eps_pri = sqrt_m * config.eps_abs + config.eps_rel * norm2(&a_theta).max(norm2(&z));
        let eps_dual = sqrt_n * config.eps_abs + config.eps_rel * rho * norm2(&tmp_n);
        primal_residuals.push(r_norm);
        dual_residuals.push(s_norm);
        if config.trace {
            trace.push(TracePoint {
                iter: it,
                seconds: start.elapsed().as_secs_f64(),
                objective: objective_with(&pen, yv, &theta, lambda),
            });
        }
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            break;
        }
        if config.adaptive {
            if r_norm > config.mu * s_norm {
                rho *= config.tau;
                u.iter_mut().for_each(|x| *x /= config.tau);
            } else if s_norm > config.mu * r_norm {
                rho /= config.tau;
                u.iter_mut().for_each(|x| *x *= config.tau);
            }
        }
    }

    let dual_u: Vec<f64> = w.iter().map(|x| rho_used * x).collect();
    let objective = objective_with(&pen, yv, &theta, lambda);
    let fit = FitResult {
        theta: y.with_values(theta.clone())?,
        objective,
        iters,
        primal_residuals,
        dual_residuals,
        converged,
        dual_u: Some(dual_u),
        trace,
    };
    Ok((fit, AdmmState { theta, z, u, rho }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{soft_threshold, tf1d_pdip, tv1d_dp, TF1dProblem};
    use crate::spectral::poly_projection;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(dims: &[usize], seed: u64) -> GridSignal {
        let shape = LatticeShape::uniform(dims).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..shape.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        GridSignal::new(shape, v).unwrap()
    }

    fn dense(p: &KroneckerPenalty) -> DMatrix<f64> {
        let n = p.cols();
        let mut d = DMatrix::zeros(p.rows(), n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            for (r, v) in p.apply_slice(&e).into_iter().enumerate() {
                d[(r, c)] = v;
            }
        }
        d
    }

    fn dense_solve(p: &KroneckerPenalty, rho: f64, rhs: &[f64]) -> DVector<f64> {
        let d = dense(p);
        let a = DMatrix::identity(p.cols(), p.cols()) + d.transpose() * &d * rho;
        a.lu().solve(&DVector::from_column_slice(rhs)).unwrap()
    }

    #[test]
    fn dct_update_examples() {
        let shape = LatticeShape::uniform(&[2]).unwrap();
        let rhs = GridSignal::new(shape, vec![1.0, 0.0]).unwrap();
        let x = theta_update_dct(&rhs, 1.0).unwrap();
        assert!((x.values()[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((x.values()[1] - 1.0 / 3.0).abs() < 1e-14);
        let y = random_signal(&[4, 5], 1);
        let same = theta_update_dct(&y, 0.0).unwrap();
        for (a, b) in same.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-13);
        }
        let p = KroneckerPenalty::new(y.shape(), 0).unwrap();
        for rho in [0.1, 1.0, 10.0] {
            let x = theta_update_dct(&y, rho).unwrap();
            let d = dense_solve(&p, rho, y.values());
            for (a, b) in x.values().iter().zip(d.iter()) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cg_update_examples() {
        let y = random_signal(&[5, 5], 2);
        let inner = KroneckerPenalty::with_order(y.shape(), 2).unwrap();
        let x = theta_update_cg(&y, 1.3, &inner, 1e-12).unwrap();
        let d = dense_solve(&inner, 1.3, y.values());
        for (a, b) in x.values().iter().zip(d.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        let same = theta_update_cg(&y, 0.0, &inner, 1e-12).unwrap();
        assert_eq!(same.values(), y.values());
        let lin = GridSignal::from_fn(y.shape().clone(), |x| 1.0 + 2.0 * x[0] - x[1]).unwrap();
        let out = theta_update_cg(&lin, 5.0, &inner, 1e-12).unwrap();
        for (a, b) in out.values().iter().zip(lin.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn z_update_reductions() {
        let shape = LatticeShape::uniform(&[4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // j = k+1 is soft-thresholding on the full stacked vector
        let pen = KroneckerPenalty::new(&shape, 1).unwrap();
        let w: Vec<f64> = (0..pen.rows())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        assert_eq!(
            z_update(&shape, 1, 2, &w, 0.3, 1e-12).unwrap(),
            soft_threshold(&w, 0.3)
        );

        // j = k on a single line is the TV DP
        let line = LatticeShape::uniform(&[12]).unwrap();
        let v: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(
            z_update(&line, 1, 1, &v, 0.2, 1e-12).unwrap(),
            tv1d_dp(&v, 0.2)
        );

        // k = 2, j = 1 on one line is order-2 trend filtering
        let line = LatticeShape::uniform(&[21]).unwrap();
        let v: Vec<f64> = (0..20)
            .map(|i| (i as f64 / 3.0).sin() + rng.random_range(-0.2..0.2))
            .collect();
        let z = z_update(&line, 2, 1, &v, 0.5, 1e-12).unwrap();
        let direct = tf1d_pdip(&TF1dProblem::uniform(v, 0.5, 2), 1e-12).unwrap();
        for (a, b) in z.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_zero_returns_y() {
        let y = random_signal(&[5, 5], 4);
        let fit = ktf_admm(&y, 1, 0.0, &AdmmConfig::type1()).unwrap();
        assert_eq!(fit.theta, y);
        assert_eq!(fit.iters, 0);
        assert!(fit.converged);
    }

    #[test]
    fn huge_lambda_gives_polynomial_projection() {
        for k in 0..=1 {
            let y = random_signal(&[6, 6], 5 + k as u64);
            let proj = poly_projection(&y, k).unwrap();
            for j in 0..=k + 1 {
                let fit = ktf_admm(&y, k, 1e3, &AdmmConfig::with_split(j)).unwrap();
                let scale = proj.values().iter().map(|v| v * v).sum::<f64>().sqrt();
                let err = fit
                    .theta
                    .values()
                    .iter()
                    .zip(proj.values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(err <= 1e-4 * scale.max(1.0), "k={k} j={j}: {err}");
            }
        }
    }

    #[test]
    fn types_one_and_two_coincide_for_k1() {
        let y = random_signal(&[6, 7], 8);
        let a = ktf_admm(&y, 1, 0.4, &AdmmConfig::type1()).unwrap();
        let b = ktf_admm(&y, 1, 0.4, &AdmmConfig::type2(1)).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.primal_residuals, b.primal_residuals);
    }

    #[test]
    fn kkt_certificate() {
        for k in 0..=2 {
            let y = random_signal(&[7, 6], 10 + k as u64);
            let lambda = 0.3;
            let fit = ktf_admm(&y, k, lambda, &AdmmConfig::type1()).unwrap();
            assert!(fit.converged);
            let u = fit.dual_u.unwrap();
            assert!(u.iter().all(|v| v.abs() <= lambda * (1.0 + 1e-6)));
            let pen = KroneckerPenalty::new(y.shape(), k).unwrap();
            let dtu = pen.apply_transpose_slice(&u);
            let ymax = y.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..y.len() {
                let r = fit.theta.values()[i] - y.values()[i] + dtu[i];
                assert!(r.abs() <= 1e-4 * ymax, "k={k}: {r}");
            }
        }
    }

    #[test]
    fn warm_start_reuses_iterates() {
        let y = random_signal(&[6, 6], 12);
        let cfg = AdmmConfig::type1();
        let (first, state) = ktf_admm_warm(&y, 1, 0.5, &cfg, None).unwrap();
        let (again, _) = ktf_admm_warm(&y, 1, 0.5, &cfg, Some(&state)).unwrap();
        assert!(again.iters <= 2);
        assert!((again.objective - first.objective).abs() <= 1e-6 * first.objective);
    }

    #[test]
    fn residuals_trend_down() {
        let y = random_signal(&[8, 8], 13);
        let cfg = AdmmConfig {
            eps_abs: 1e-14,
            eps_rel: 1e-14,
            max_iters: 500,
            ..AdmmConfig::type1()
        };
        let fit = ktf_admm(&y, 1, 1.0, &cfg).unwrap();
        let worst = |t: usize| fit.primal_residuals[t - 1].max(fit.dual_residuals[t - 1]);
        for t in [10, 50] {
            if fit.primal_residuals.len() >= 10 * t {
                assert!(worst(10 * t) < worst(t));
            }
        }
    }
}
