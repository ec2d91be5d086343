//! Univariate proximal kernels: soft-thresholding, exact 1-d total variation
//! denoising, and banded interior-point trend filtering of any order.
//!
//! Each kernel solves `min_θ ½‖y − θ‖² + λ‖D θ‖₁` for one line. The dual
//! variable `w` of that problem satisfies `θ = y − Dᵀ w` and `‖w‖_∞ ≤ λ`.

use crate::banded::BandedSpd;
use crate::error::{KtfError, Result};
use crate::penalty::Diff1d;

const PDIP_MAX_ITERS: usize = 200;
const PDIP_MAX_LS_ITERS: usize = 50;
const PDIP_ALPHA: f64 = 0.01;
const PDIP_BETA: f64 = 0.5;
/// Barrier growth factor relative to the duality gap.
const PDIP_MU: f64 = 2.0;

/// Elementwise `sign(v) · max(|v| − t, 0)`.
pub fn soft_threshold(v: &[f64], t: f64) -> Vec<f64> {
    v.iter().map(|&x| soft(x, t)).collect()
}

#[inline]
pub(crate) fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Exact minimizer of `½‖y − θ‖² + λ Σ |θ_{i+1} − θ_i|` in O(N).
///
/// Dynamic programming over piecewise-linear derivative messages; each stage
/// clips the message at `±λ` and stores the clipping knots for backtracking.
pub fn tv1d_dp(y: &[f64], lambda: f64) -> Vec<f64> {
    let mut beta = vec![0.0; y.len()];
    tv1d_dp_into(y, lambda, &mut beta);
    beta
}

pub(crate) fn tv1d_dp_into(y: &[f64], lam: f64, beta: &mut [f64]) {
    let n = y.len();
    if n == 0 {
        return;
    }
    if n == 1 || lam <= 0.0 {
        beta.copy_from_slice(y);
        return;
    }
    let mut x = vec![0.0; 2 * n];
    let mut a = vec![0.0; 2 * n];
    let mut b = vec![0.0; 2 * n];
    let mut tm = vec![0.0; n - 1];
    let mut tp = vec![0.0; n - 1];

    tm[0] = -lam + y[0];
    tp[0] = lam + y[0];
    let mut l = n - 1;
    let mut r = n;
    x[l] = tm[0];
    x[r] = tp[0];
    a[l] = 1.0;
    b[l] = -y[0] + lam;
    a[r] = -1.0;
    b[r] = y[0] + lam;
    let mut afirst = 1.0;
    let mut bfirst = -y[1] - lam;
    let mut alast = -1.0;
    let mut blast = y[1] - lam;

    for k in 1..n - 1 {
        let (mut alo, mut blo) = (afirst, bfirst);
        let mut lo = l;
        while lo <= r {
            if alo * x[lo] + blo > -lam {
                break;
            }
            alo += a[lo];
            blo += b[lo];
            lo += 1;
        }

        let (mut ahi, mut bhi) = (alast, blast);
        let mut hi = r as isize;
        while hi >= lo as isize {
            let h = hi as usize;
            if -ahi * x[h] - bhi < lam {
                break;
            }
            ahi += a[h];
            bhi += b[h];
            hi -= 1;
        }

        tm[k] = (-lam - blo) / alo;
        l = lo - 1;
        x[l] = tm[k];

        tp[k] = (lam + bhi) / (-ahi);
        r = (hi + 1) as usize;
        x[r] = tp[k];

        a[l] = alo;
        b[l] = blo + lam;
        a[r] = ahi;
        b[r] = bhi + lam;
        afirst = 1.0;
        bfirst = -y[k + 1] - lam;
        alast = -1.0;
        blast = y[k + 1] - lam;
    }

    let (mut alo, mut blo) = (afirst, bfirst);
    let mut lo = l;
    while lo <= r {
        if alo * x[lo] + blo > 0.0 {
            break;
        }
        alo += a[lo];
        blo += b[lo];
        lo += 1;
    }
    beta[n - 1] = -blo / alo;

    for k in (0..n - 1).rev() {
        beta[k] = if beta[k + 1] > tp[k] {
            tp[k]
        } else if beta[k + 1] < tm[k] {
            tm[k]
        } else {
            beta[k + 1]
        };
    }
}

/// Dual of the 1-d TV problem from its primal solution: `w_i = −Σ_{l≤i}(y − θ)_l`, clipped to `±λ`.
pub(crate) fn tv1d_dual(y: &[f64], theta: &[f64], lam: f64, w: &mut [f64]) {
    let mut acc = 0.0;
    for (i, wi) in w.iter_mut().enumerate() {
        acc -= y[i] - theta[i];
        *wi = acc.clamp(-lam, lam);
    }
}

/// A univariate trend filtering instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TF1dProblem {
    pub y: Vec<f64>,
    pub lambda: f64,
    /// Difference order `k + 1`.
    pub order: usize,
    /// Design points; evenly spaced when `None`.
    pub design: Option<Vec<f64>>,
}

impl TF1dProblem {
    pub fn uniform(y: Vec<f64>, lambda: f64, order: usize) -> Self {
        Self {
            y,
            lambda,
            order,
            design: None,
        }
    }

    fn diff(&self) -> Result<Diff1d> {
        match &self.design {
            None => Ok(Diff1d::uniform(self.y.len(), self.order)),
            Some(z) => {
                if z.len() != self.y.len() {
                    return Err(KtfError::ShapeMismatch {
                        expected: self.y.len(),
                        got: z.len(),
                    });
                }
                Diff1d::build(z, self.order)
            }
        }
    }
}

/// Trend filtering of order `problem.order` by a primal-dual interior-point method.
///
/// Returns the primal solution with duality gap at most `tol`.
pub fn tf1d_pdip(problem: &TF1dProblem, tol: f64) -> Result<Vec<f64>> {
    if !(problem.lambda >= 0.0) || !(tol > 0.0) {
        return Err(KtfError::InvalidArgument(
            "lambda must be nonnegative and tol positive".into(),
        ));
    }
    let diff = problem.diff()?;
    Ok(tf1d_pdip_dual(&problem.y, problem.lambda, &diff, tol)?.0)
}

struct Pdip<'a> {
    diff: &'a Diff1d,
    m: usize,
    bw: usize,
    /// Lower band of `D Dᵀ`.
    ddt: BandedSpd,
    /// Both bands of `D Dᵀ`, row `r` holding columns `r − bw..=r + bw` (zero outside `0..m`).
    full: Vec<f64>,
    dy: Vec<f64>,
}

impl<'a> Pdip<'a> {
    fn new(diff: &'a Diff1d, y: &[f64]) -> Self {
        let m = diff.rows();
        let bw = diff.order();
        let mut ddt = BandedSpd::zeros(m, bw);
        for r in 0..m {
            let row_r = diff.row(r);
            for s in r.saturating_sub(bw)..=r {
                let row_s = diff.row(s);
                // row s covers s..=s+bw, row r covers r..=r+bw; overlap r..=s+bw
                let v: f64 = (r..=s + bw).map(|c| row_r[c - r] * row_s[c - s]).sum();
                ddt.set(r, s, v);
            }
        }
        let width = 2 * bw + 1;
        let mut full = vec![0.0; m * width];
        for r in 0..m {
            for c in r.saturating_sub(bw)..(r + bw + 1).min(m) {
                full[r * width + c + bw - r] = if c <= r { ddt.get(r, c) } else { ddt.get(c, r) };
            }
        }
        let mut dy = vec![0.0; m];
        diff.apply_vec(y, &mut dy);
        Self {
            diff,
            m,
            bw,
            ddt,
            full,
            dy,
        }
    }

    fn ddt_mul(&self, z: &[f64], out: &mut [f64]) {
        let (m, bw) = (self.m, self.bw);
        let width = 2 * bw + 1;
        for r in 0..m {
            let row = &self.full[r * width..(r + 1) * width];
            let s = if r >= bw && r + bw < m {
                row.iter()
                    .zip(&z[r - bw..=r + bw])
                    .map(|(a, b)| a * b)
                    .sum()
            } else {
                let lo = r.saturating_sub(bw);
                let hi = (r + bw + 1).min(m);
                (lo..hi).map(|c| row[c + bw - r] * z[c]).sum()
            };
            out[r] = s;
        }
    }

    fn dt(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.diff.n()];
        self.diff.apply_transpose_vec(z, &mut out);
        out
    }

    /// Duality gap `λ‖Dθ‖₁ − zᵀDθ` at `θ = y − Dᵀz`, for feasible `z`.
    fn gap(&self, y: &[f64], z: &[f64], lam: f64) -> f64 {
        let dtz = self.dt(z);
        let theta: Vec<f64> = y.iter().zip(&dtz).map(|(a, b)| a - b).collect();
        let mut dtheta = vec![0.0; self.m];
        self.diff.apply_vec(&theta, &mut dtheta);
        dtheta
            .iter()
            .zip(z)
            .map(|(d, zi)| lam * d.abs() - zi * d)
            .sum::<f64>()
            .max(0.0)
    }

    /// Solves `(DDᵀ)_{FF} z_F = (Dy)_F − (DDᵀ)_{FB} z_B` with the bound coordinates fixed.
    fn polish(&self, y: &[f64], z: &[f64], fixed: &[i8], lam: f64) -> Option<Vec<f64>> {
        let free: Vec<usize> = (0..self.m).filter(|&i| fixed[i] == 0).collect();
        let mut zb: Vec<f64> = fixed.iter().map(|&s| s as f64 * lam).collect();
        let mut rhs_full = vec![0.0; self.m];
        self.ddt_mul(&zb, &mut rhs_full);
        let mut sys = BandedSpd::zeros(free.len(), self.bw);
        let mut rhs: Vec<f64> = free.iter().map(|&i| self.dy[i] - rhs_full[i]).collect();
        for (p, &i) in free.iter().enumerate() {
            for q in p.saturating_sub(self.bw)..=p {
                let j = free[q];
                if i - j <= self.bw {
                    sys.set(p, q, self.ddt.get(i, j));
                }
            }
        }
        if !free.is_empty() {
            if !sys.cholesky() {
                return None;
            }
            sys.solve_factored(&mut rhs);
        }
        let slack = lam * (1.0 + 1e-9);
        for (p, &i) in free.iter().enumerate() {
            if rhs[p].abs() > slack {
                return None;
            }
            zb[i] = rhs[p].clamp(-lam, lam);
        }
        let dtz = self.dt(&zb);
        let theta: Vec<f64> = y.iter().zip(&dtz).map(|(a, b)| a - b).collect();
        let mut dtheta = vec![0.0; self.m];
        self.diff.apply_vec(&theta, &mut dtheta);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for i in 0..self.m {
            if fixed[i] != 0 && (fixed[i] as f64) * dtheta[i] < -1e-9 * scale {
                return None;
            }
        }
        let _ = z;
        Some(zb)
    }
}

/// Primal and dual solutions `(θ, w)` of univariate trend filtering with operator `diff`.
pub(crate) fn tf1d_pdip_dual(
    y: &[f64],
    lam: f64,
    diff: &Diff1d,
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = diff.rows();
    if m == 0 || lam == 0.0 {
        return Ok((y.to_vec(), vec![0.0; m]));
    }
    let pd = Pdip::new(diff, y);

    // λ beyond the dual bound: θ is the projection of y onto null(D)
    let mut chol = pd.ddt.clone();
    if !chol.cholesky() {
        return Err(KtfError::InvalidArgument(
            "singular difference operator".into(),
        ));
    }
    let mut zmax = pd.dy.clone();
    chol.solve_factored(&mut zmax);
    if zmax.iter().all(|v| v.abs() <= lam) {
        let dtz = pd.dt(&zmax);
        let theta = y.iter().zip(&dtz).map(|(a, b)| a - b).collect();
        return Ok((theta, zmax));
    }

    let mf = m as f64;
    let mut z = vec![0.0; m];
    let mut mu1 = vec![1.0; m];
    let mut mu2 = vec![1.0; m];
    let mut f1: Vec<f64> = z.iter().map(|zi| zi - lam).collect();
    let mut f2: Vec<f64> = z.iter().map(|zi| -zi - lam).collect();
    let mut t = 1.0;
    let mut last_step = f64::INFINITY;
    let mut gap = f64::INFINITY;

    let mut ddtz = vec![0.0; m];
    let mut dz = vec![0.0; m];
    let mut dmu1 = vec![0.0; m];
    let mut dmu2 = vec![0.0; m];
    let mut newz = vec![0.0; m];
    let mut newmu1 = vec![0.0; m];
    let mut newmu2 = vec![0.0; m];
    let mut newf1 = vec![0.0; m];
    let mut newf2 = vec![0.0; m];
    let mut tmp = vec![0.0; m];

    let mut dtz = vec![0.0; diff.n()];
    let mut w = vec![0.0; m];
    let mut ddt_inv_w = vec![0.0; m];
    let mut s = pd.ddt.clone();
    for _ in 0..PDIP_MAX_ITERS {
        pd.ddt_mul(&z, &mut ddtz);
        diff.apply_transpose_vec(&z, &mut dtz);
        let dtz_sq: f64 = dtz.iter().map(|v| v * v).sum();
        // two primal bounds; the smaller is valid
        for i in 0..m {
            w[i] = pd.dy[i] - (mu1[i] - mu2[i]);
        }
        ddt_inv_w.copy_from_slice(&w);
        chol.solve_factored(&mut ddt_inv_w);
        let pobj1 = 0.5 * w.iter().zip(&ddt_inv_w).map(|(a, b)| a * b).sum::<f64>()
            + lam * (0..m).map(|i| mu1[i] + mu2[i]).sum::<f64>();
        let pobj2 = 0.5 * dtz_sq + lam * (0..m).map(|i| (pd.dy[i] - ddtz[i]).abs()).sum::<f64>();
        let pobj = pobj1.min(pobj2);
        let dobj = -0.5 * dtz_sq + pd.dy.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
        gap = pobj - dobj;
        if gap <= tol {
            break;
        }

        // barrier update after a long enough step, driven by the duality gap
        if last_step >= 0.2 {
            t = (2.0 * mf * PDIP_MU / gap).max(1.2 * t);
        }
        let inv_t = 1.0 / t;

        s.clone_from(&pd.ddt);
        for i in 0..m {
            s.add_diag(i, -(mu1[i] / f1[i] + mu2[i] / f2[i]));
        }
        if !s.cholesky() {
            break;
        }
        for i in 0..m {
            dz[i] = -ddtz[i] + pd.dy[i] + inv_t / f1[i] - inv_t / f2[i];
        }
        s.solve_factored(&mut dz);
        for i in 0..m {
            dmu1[i] = -(mu1[i] + (inv_t + dz[i] * mu1[i]) / f1[i]);
            dmu2[i] = -(mu2[i] + (inv_t - dz[i] * mu2[i]) / f2[i]);
        }

        let residual_norm =
            |zz: &[f64], m1: &[f64], m2: &[f64], g1: &[f64], g2: &[f64], buf: &mut [f64]| {
                pd.ddt_mul(zz, buf);
                let mut acc = 0.0;
                for i in 0..m {
                    let rd = buf[i] - pd.dy[i] + m1[i] - m2[i];
                    let c1 = -m1[i] * g1[i] - inv_t;
                    let c2 = -m2[i] * g2[i] - inv_t;
                    acc += rd * rd + c1 * c1 + c2 * c2;
                }
                acc.sqrt()
            };
        let res0 = residual_norm(&z, &mu1, &mu2, &f1, &f2, &mut tmp);

        let mut step: f64 = 1.0;
        for i in 0..m {
            if dmu1[i] < 0.0 {
                step = step.min(0.99 * (-mu1[i] / dmu1[i]));
            }
            if dmu2[i] < 0.0 {
                step = step.min(0.99 * (-mu2[i] / dmu2[i]));
            }
        }
        let mut accepted = false;
        for _ in 0..PDIP_MAX_LS_ITERS {
            for i in 0..m {
                newz[i] = z[i] + step * dz[i];
                newmu1[i] = mu1[i] + step * dmu1[i];
                newmu2[i] = mu2[i] + step * dmu2[i];
                newf1[i] = newz[i] - lam;
                newf2[i] = -newz[i] - lam;
            }
            let feasible = newf1.iter().chain(&newf2).all(|v| *v < 0.0);
            if feasible {
                let res = residual_norm(&newz, &newmu1, &newmu2, &newf1, &newf2, &mut tmp);
                if res <= (1.0 - PDIP_ALPHA * step) * res0 {
                    accepted = true;
                    break;
                }
            }
            step *= PDIP_BETA;
        }
        if !accepted {
            break;
        }
        last_step = step;
        std::mem::swap(&mut z, &mut newz);
        std::mem::swap(&mut mu1, &mut newmu1);
        std::mem::swap(&mut mu2, &mut newmu2);
        std::mem::swap(&mut f1, &mut newf1);
        std::mem::swap(&mut f2, &mut newf2);
    }

    // active-set polish: coordinates whose multiplier dominates the slack sit on the bound
    let fixed: Vec<i8> = (0..m)
        .map(|i| {
            if mu1[i] > -f1[i] {
                1
            } else if mu2[i] > -f2[i] {
                -1
            } else {
                0
            }
        })
        .collect();
    let ipm_gap = pd.gap(y, &z, lam);
    if let Some(zp) = pd.polish(y, &z, &fixed, lam) {
        let pg = pd.gap(y, &zp, lam);
        if pg <= ipm_gap.max(tol) {
            z = zp;
            gap = pg;
        } else {
            gap = ipm_gap;
        }
    } else {
        gap = gap.min(ipm_gap);
    }
    if gap > tol {
        return Err(KtfError::NotConverged {
            solver: "tf1d_pdip",
            iters: PDIP_MAX_ITERS,
            residual: gap,
        });
    }
    let dtz = pd.dt(&z);
    let theta = y.iter().zip(&dtz).map(|(a, b)| a - b).collect();
    Ok((theta, z))
}

/// Prox of `t‖D^(order)·‖₁` on one evenly spaced line, with its dual.
///
/// `dual` has length `max(N − order, 0)`; the PDIP gap target is `tol · max(1, ‖v‖²)`.
pub(crate) fn line_prox(
    order: usize,
    t: f64,
    v: &[f64],
    out: &mut [f64],
    dual: &mut [f64],
    tol: f64,
) -> Result<()> {
    match order {
        0 => {
            for ((o, w), &x) in out.iter_mut().zip(dual.iter_mut()).zip(v) {
                *o = soft(x, t);
                *w = x.clamp(-t, t);
            }
        }
        1 => {
            tv1d_dp_into(v, t, out);
            tv1d_dual(v, out, t, dual);
        }
        _ => {
            let diff = Diff1d::uniform(v.len(), order);
            let scale = v.iter().map(|x| x * x).sum::<f64>().max(1.0);
            let (theta, w) = tf1d_pdip_dual(v, t, &diff, tol * scale)?;
            out.copy_from_slice(&theta);
            dual.copy_from_slice(&w);
        }
    }
    Ok(())
}

/// Line-wise prox along `axis` of a tensor of shape `dims`.
///
/// `dual` receives the per-line duals in the layout of the order-`order`
/// differences along `axis` (that axis shortened by `order`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn prox_lines(
    dims: &[usize],
    axis: usize,
    order: usize,
    t: f64,
    input: &[f64],
    out: &mut [f64],
    dual: &mut [f64],
    tol: f64,
) -> Result<()> {
    use rayon::prelude::*;
    let n = dims[axis];
    if n == 0 {
        return Ok(());
    }
    if order == 0 {
        for ((o, w), &x) in out.iter_mut().zip(dual.iter_mut()).zip(input) {
            *o = soft(x, t);
            *w = x.clamp(-t, t);
        }
        return Ok(());
    }
    let rows = n.saturating_sub(order);
    if rows == 0 {
        out.copy_from_slice(input);
        return Ok(());
    }
    let lines_in = crate::lines::gather(dims, axis, input);
    let mut lines_out = vec![0.0; lines_in.len()];
    let mut lines_dual = vec![0.0; lines_in.len() / n * rows];
    let min_len = crate::lines::par_min_len(n);
    lines_in
        .par_chunks(n)
        .zip(lines_out.par_chunks_mut(n))
        .zip(lines_dual.par_chunks_mut(rows))
        .with_min_len(min_len)
        .try_for_each(|((v, o), w)| line_prox(order, t, v, o, w, tol))?;
    crate::lines::scatter(dims, axis, &lines_out, out);
    let mut dual_dims = dims.to_vec();
    dual_dims[axis] = rows;
    crate::lines::scatter(&dual_dims, axis, &lines_dual, dual);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tv_objective(y: &[f64], theta: &[f64], lam: f64) -> f64 {
        let fit: f64 = y
            .iter()
            .zip(theta)
            .map(|(a, b)| 0.5 * (a - b).powi(2))
            .sum();
        fit + lam * theta.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()
    }

    fn tf_objective(y: &[f64], theta: &[f64], lam: f64, diff: &Diff1d) -> f64 {
        let mut d = vec![0.0; diff.rows()];
        diff.apply_vec(theta, &mut d);
        let fit: f64 = y
            .iter()
            .zip(theta)
            .map(|(a, b)| 0.5 * (a - b).powi(2))
            .sum();
        fit + lam * d.iter().map(|v| v.abs()).sum::<f64>()
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[2.0, -0.5], 1.0), vec![1.0, 0.0]);
        assert_eq!(soft_threshold(&[2.0, -0.5], 0.0), vec![2.0, -0.5]);
        assert_eq!(soft_threshold(&[0.0, 0.0], 3.0), vec![0.0, 0.0]);
    }

    #[test]
    fn tv1d_dp_examples() {
        let th = tv1d_dp(&[1.0, -1.0], 0.25);
        assert!((th[0] - 0.75).abs() < 1e-15 && (th[1] + 0.75).abs() < 1e-15);
        assert_eq!(tv1d_dp(&[3.0, 1.0, 2.0], 0.0), vec![3.0, 1.0, 2.0]);
        for lam in [1.0, 1.5, 10.0] {
            let th = tv1d_dp(&[1.0, -1.0], lam);
            assert!(th.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn tv1d_dp_beats_brute_force_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..40 {
            let n = rng.random_range(2..=3);
            let y: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(-1.0f64..1.0) * 100.0).round() / 100.0)
                .collect();
            let lam = rng.random_range(0.0..0.8);
            let th = tv1d_dp(&y, lam);
            let best = tv_objective(&y, &th, lam);
            // quantized candidates in [min y, max y], step 0.01; the minimizer lies in that range
            let lo = (y.iter().cloned().fold(f64::INFINITY, f64::min) * 100.0).round() as i64;
            let hi = (y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * 100.0).round() as i64;
            let grid: Vec<f64> = (lo..=hi).map(|i| i as f64 / 100.0).collect();
            let mut cand = vec![0.0; n];
            let mut min_obj = f64::INFINITY;
            let total = grid.len().pow(n as u32);
            for code in 0..total {
                let mut c = code;
                for v in cand.iter_mut() {
                    *v = grid[c % grid.len()];
                    c /= grid.len();
                }
                min_obj = min_obj.min(tv_objective(&y, &cand, lam));
            }
            assert!(best <= min_obj + 1e-12, "dp {best} grid {min_obj}");
        }
    }

    #[test]
    fn tv1d_dp_four_points_brute_force() {
        let y = [0.3, -0.2, 0.5, 0.1];
        let lam = 0.15;
        let th = tv1d_dp(&y, lam);
        let best = tv_objective(&y, &th, lam);
        let grid: Vec<f64> = (-20..=50).map(|i| i as f64 / 100.0).collect();
        let mut min_obj = f64::INFINITY;
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    for &d in &grid {
                        min_obj = min_obj.min(tv_objective(&y, &[a, b, c, d], lam));
                    }
                }
            }
        }
        assert!(best <= min_obj + 1e-12);
    }

    #[test]
    fn pdip_order1_matches_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let y: Vec<f64> = (0..50).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lam = rng.random_range(0.05..2.0);
            let p = TF1dProblem::uniform(y.clone(), lam, 1);
            let a = tf1d_pdip(&p, 1e-10).unwrap();
            let b = tv1d_dp(&y, lam);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pdip_trivial_cases() {
        let y = vec![1.0, 4.0, 2.0, 8.0];
        assert_eq!(
            tf1d_pdip(&TF1dProblem::uniform(y.clone(), 0.0, 2), 1e-8).unwrap(),
            y
        );
        assert_eq!(
            tf1d_pdip(&TF1dProblem::uniform(y.clone(), 1.0, 4), 1e-8).unwrap(),
            y
        );
        assert_eq!(
            tf1d_pdip(&TF1dProblem::uniform(y.clone(), 1.0, 7), 1e-8).unwrap(),
            y
        );
    }

    /// Least-squares polynomial fit of degree `deg` via normal equations on `N ≤ 20` points.
    fn poly_fit(y: &[f64], deg: usize) -> Vec<f64> {
        let n = y.len();
        let x = DMatrix::from_fn(n, deg + 1, |i, p| ((i as f64) / n as f64).powi(p as i32));
        let yv = DVector::from_column_slice(y);
        let beta = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * &yv));
        (x * beta).iter().copied().collect()
    }

    #[test]
    fn pdip_huge_lambda_is_polynomial_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for order in 1..=3 {
            for n in [8, 14, 20] {
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let th = tf1d_pdip(&TF1dProblem::uniform(y.clone(), 1e6, order), 1e-10).unwrap();
                let fit = poly_fit(&y, order - 1);
                for (a, b) in th.iter().zip(&fit) {
                    assert!((a - b).abs() < 1e-8);
                }
            }
        }
    }

    /// Box-constrained least norm `min ‖y − θ − Dᵀu‖` over `‖u‖_∞ ≤ λ`.
    ///
    /// `Dᵀ` has full column rank, so the minimizer is the dense least-squares solution
    /// whenever that solution lies in the box; otherwise the residual is reported as infinite.
    fn kkt_residual(y: &[f64], theta: &[f64], lam: f64, diff: &Diff1d) -> f64 {
        let n = y.len();
        let m = diff.rows();
        let mut dt = DMatrix::zeros(n, m);
        for r in 0..m {
            for (s, c) in diff.row(r).iter().enumerate() {
                dt[(r + s, r)] = *c;
            }
        }
        let g = DVector::from_iterator(n, y.iter().zip(theta).map(|(a, b)| a - b));
        let u = dt.clone().svd(true, true).solve(&g, 1e-14).unwrap();
        if u.amax() > lam * (1.0 + 1e-6) {
            return f64::INFINITY;
        }
        (g - dt * u).norm()
    }

    #[test]
    fn pdip_kkt_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for order in 2..=3 {
            let y: Vec<f64> = (0..25)
                .map(|i| (i as f64 / 4.0).sin() + rng.random_range(-0.3..0.3))
                .collect();
            let lam = 0.5;
            let diff = Diff1d::uniform(25, order);
            let (th, w) = tf1d_pdip_dual(&y, lam, &diff, 1e-10).unwrap();
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(kkt_residual(&y, &th, lam, &diff) <= 1e-5 * ynorm);
            assert!(w.iter().all(|v| v.abs() <= lam));
            let mut dtw = vec![0.0; 25];
            diff.apply_transpose_vec(&w, &mut dtw);
            for i in 0..25 {
                assert!((y[i] - th[i] - dtw[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pdip_beats_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let diff = Diff1d::uniform(40, 3);
        let y: Vec<f64> = (0..40)
            .map(|i| ((i as f64) / 6.0).cos() + rng.random_range(-0.5..0.5))
            .collect();
        let th = tf1d_pdip(&TF1dProblem::uniform(y.clone(), 2.0, 3), 1e-10).unwrap();
        let best = tf_objective(&y, &th, 2.0, &diff);
        for _ in 0..200 {
            let pert: Vec<f64> = th
                .iter()
                .map(|v| v + rng.random_range(-1e-3..1e-3))
                .collect();
            assert!(tf_objective(&y, &pert, 2.0, &diff) >= best - 1e-12);
        }
    }

    #[test]
    fn pdip_uneven_design() {
        let z = vec![0.0f64, 0.1, 0.15, 0.4, 0.5, 0.8, 0.85, 1.0, 1.3, 1.35];
        let y: Vec<f64> = z.iter().map(|v| (3.0 * v).sin()).collect();
        let p = TF1dProblem {
            y: y.clone(),
            lambda: 1e6,
            order: 2,
            design: Some(z.clone()),
        };
        // huge λ on a general design leaves the linear fit in z
        let th = tf1d_pdip(&p, 1e-10).unwrap();
        let x = DMatrix::from_fn(10, 2, |i, p| z[i].powi(p as i32));
        let yv = DVector::from_column_slice(&y);
        let beta = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * &yv));
        let fit = x * beta;
        for i in 0..10 {
            assert!((th[i] - fit[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn dual_of_dp_is_certificate() {
        let y = [0.5, 2.0, -1.0, 0.2, 0.3, 1.5];
        let lam = 0.4;
        let th = tv1d_dp(&y, lam);
        let mut w = vec![0.0; 5];
        tv1d_dual(&y, &th, lam, &mut w);
        let diff = Diff1d::uniform(6, 1);
        let mut dtw = vec![0.0; 6];
        diff.apply_transpose_vec(&w, &mut dtw);
        for i in 0..6 {
            assert!((y[i] - th[i] - dtw[i]).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn tv1d_dp_nonexpansive(
            y in prop::collection::vec(-3.0f64..3.0, 1..30),
            delta in prop::collection::vec(-0.5f64..0.5, 30),
            lam in 0.0f64..2.0,
        ) {
            let y2: Vec<f64> = y.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let a = tv1d_dp(&y, lam);
            let b = tv1d_dp(&y2, lam);
            let lhs: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let rhs: f64 = y.iter().zip(&y2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(lhs <= rhs + 1e-10);
        }

        #[test]
        fn pdip_nonexpansive(
            y in prop::collection::vec(-3.0f64..3.0, 4..25),
            delta in prop::collection::vec(-0.5f64..0.5, 25),
            lam in 0.01f64..2.0,
            order in 2usize..=3,
        ) {
            let y2: Vec<f64> = y.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let a = tf1d_pdip(&TF1dProblem::uniform(y.clone(), lam, order), 1e-11).unwrap();
            let b = tf1d_pdip(&TF1dProblem::uniform(y2.clone(), lam, order), 1e-11).unwrap();
            let lhs: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let rhs: f64 = y.iter().zip(&y2).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(lhs <= rhs + 1e-6);
        }

        #[test]
        fn reversal_symmetry(y in prop::collection::vec(-3.0f64..3.0, 3..25), lam in 0.01f64..2.0, order in 1usize..=3) {
            let rev: Vec<f64> = y.iter().rev().copied().collect();
            let a = tf1d_pdip(&TF1dProblem::uniform(y.clone(), lam, order), 1e-11).unwrap();
            let b = tf1d_pdip(&TF1dProblem::uniform(rev, lam, order), 1e-11).unwrap();
            for (u, v) in a.iter().zip(b.iter().rev()) {
                prop_assert!((u - v).abs() < 1e-6);
            }
            let c = tv1d_dp(&y, lam);
            let d = tv1d_dp(&y.iter().rev().copied().collect::<Vec<_>>(), lam);
            for (u, v) in c.iter().zip(d.iter().rev()) {
                prop_assert!((u - v).abs() < 1e-9);
            }
        }
    }
}
