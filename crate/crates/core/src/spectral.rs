//! Eigenstructure of the KTF Gram operator and the linear smoothers built on it.
//!
//! `DᵀD` is the Kronecker sum of the per-axis Grams `D_jᵀ D_j`, so its
//! eigenvalues are sums `ρ^(1)_{i_1} + ... + ρ^(d)_{i_d}` and its eigenvectors
//! are tensor products of per-axis eigenvectors.

use nalgebra::DMatrix;

use crate::dct::{path_laplacian_eigs, SeparableDct};
use crate::error::{KtfError, Result};
use crate::lattice::{GridSignal, LatticeShape, MultiIndex};
use crate::lines;
use crate::penalty::Diff1d;

/// `4 sin²(π(ℓ−1)/(2N))` for `ℓ = 1..=N`.
pub fn chain_laplacian_eigvals(n: usize) -> Vec<f64> {
    path_laplacian_eigs(n)
}

/// Eigenpairs of `D^(k+1)ᵀ D^(k+1)` on `N` evenly spaced points.
///
/// Eigenvalues are nondecreasing with exactly `min(k+1, N)` zeros. Null-space
/// vectors are discrete Legendre polynomials; every vector has its first
/// nonzero entry positive.
#[derive(Debug, Clone)]
pub struct AxisSpectrum {
    pub n: usize,
    pub k: usize,
    pub rho: Vec<f64>,
    /// Column `ℓ` is the eigenvector for `rho[ℓ]`.
    pub vectors: DMatrix<f64>,
}

/// Orthonormal discrete polynomials of degree `0..count` on `n` points (columns).
pub fn legendre_basis(n: usize, count: usize) -> DMatrix<f64> {
    let count = count.min(n);
    let mut q = DMatrix::<f64>::zeros(n, count);
    let center = (n as f64 - 1.0) / 2.0;
    let scale = center.max(1.0);
    for p in 0..count {
        let mut v: Vec<f64> = (0..n)
            .map(|i| ((i as f64 - center) / scale).powi(p as i32))
            .collect();
        // two Gram-Schmidt passes keep the basis orthonormal to machine precision
        for _ in 0..2 {
            for c in 0..p {
                let dot: f64 = (0..n).map(|i| q[(i, c)] * v[i]).sum();
                for (i, vi) in v.iter_mut().enumerate() {
                    *vi -= dot * q[(i, c)];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, vi) in v.iter().enumerate() {
            q[(i, p)] = vi / norm;
        }
    }
    fix_signs(&mut q);
    q
}

fn fix_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let lead = col.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if lead < 0.0 {
            col.neg_mut();
        }
    }
}

/// Dense `DᵀD` for the order-`order` pure difference operator on `n` points.
pub(crate) fn dense_axis_gram(n: usize, order: usize) -> DMatrix<f64> {
    let diff = Diff1d::uniform(n, order);
    let mut g = DMatrix::zeros(n, n);
    for r in 0..diff.rows() {
        let row = diff.row(r);
        for (a, ca) in row.iter().enumerate() {
            for (b, cb) in row.iter().enumerate() {
                g[(r + a, r + b)] += ca * cb;
            }
        }
    }
    g
}

pub fn axis_spectrum(n: usize, k: usize) -> Result<AxisSpectrum> {
    if n == 0 {
        return Err(KtfError::InvalidArgument(
            "axis length must be positive".into(),
        ));
    }
    let gram = dense_axis_gram(n, k + 1);
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let nulls = (k + 1).min(n);
    let mut rho = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    let legendre = legendre_basis(n, nulls);
    for (pos, &src) in order.iter().enumerate() {
        if pos < nulls {
            rho.push(0.0);
            vectors.set_column(pos, &legendre.column(pos));
        } else {
            rho.push(eig.eigenvalues[src].max(0.0));
            vectors.set_column(pos, &eig.eigenvectors.column(src));
        }
    }
    fix_signs(&mut vectors);
    Ok(AxisSpectrum { n, k, rho, vectors })
}

/// Lazily enumerated eigenvalues `ξ_i = Σ_j ρ^(j)_{i_j}` of the lattice Gram `DᵀD`.
#[derive(Debug, Clone)]
pub struct GramEigvals {
    dims: Vec<usize>,
    rho: Vec<Vec<f64>>,
}

impl GramEigvals {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_rho(&self, axis: usize) -> &[f64] {
        &self.rho[axis]
    }

    /// `ξ` at a 1-based multi-index.
    pub fn get(&self, idx: &MultiIndex) -> f64 {
        idx.0.iter().zip(&self.rho).map(|(&i, r)| r[i - 1]).sum()
    }

    /// All eigenvalues in flat lattice order.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let d = self.dims.len();
        let strides: Vec<usize> = (0..d)
            .map(|a| self.dims[a + 1..].iter().product())
            .collect();
        (0..self.len()).map(move |flat| {
            (0..d)
                .map(|a| self.rho[a][(flat / strides[a]) % self.dims[a]])
                .sum()
        })
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.iter().collect()
    }

    /// Largest eigenvalue, i.e. `‖D‖²_op`.
    pub fn max(&self) -> f64 {
        self.rho
            .iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .sum()
    }
}

pub fn gram_eigvals(shape: &LatticeShape, k: usize) -> Result<GramEigvals> {
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let rho = shape
        .dims()
        .iter()
        .map(|&n| axis_spectrum(n, k).map(|s| s.rho))
        .collect::<Result<Vec<_>>>()?;
    Ok(GramEigvals {
        dims: shape.dims().to_vec(),
        rho,
    })
}

/// `‖D^(order)‖²_op` for pure differences, from exact per-axis spectra.
pub(crate) fn penalty_op_norm_sq(dims: &[usize], order: usize) -> f64 {
    if order == 0 {
        return dims.len() as f64;
    }
    dims.iter()
        .map(|&n| {
            let g = dense_axis_gram(n, order);
            g.symmetric_eigenvalues()
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .sum()
}

/// An index set `Q ⊆ [N_1] × ... × [N_d]` of retained eigenvectors.
#[derive(Debug, Clone, PartialEq)]
pub enum EigenIndexSet {
    /// `[τ_1] × ... × [τ_d]`.
    Box(Vec<usize>),
    /// Explicit 1-based multi-indices.
    Set(Vec<MultiIndex>),
}

/// Multiplies every line along `axis` by `mat` (or its transpose).
fn mode_product(dims: &[usize], axis: usize, buf: &mut [f64], mat: &DMatrix<f64>, transpose: bool) {
    let n = dims[axis];
    lines::for_each_line_mut(dims, axis, buf, |line| {
        let mut out = vec![0.0; n];
        for (r, o) in out.iter_mut().enumerate() {
            *o = if transpose {
                mat.column(r)
                    .iter()
                    .zip(line.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            } else {
                (0..n).map(|c| mat[(r, c)] * line[c]).sum()
            };
        }
        line.copy_from_slice(&out);
    });
}

/// Projection of `y` onto tensor-product eigenvectors of `DᵀD` indexed by `q`.
pub fn eigenmaps_fit(y: &GridSignal, k: usize, q: &EigenIndexSet) -> Result<GridSignal> {
    let shape = y.shape();
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let dims = shape.dims();
    let spectra = dims
        .iter()
        .map(|&n| axis_spectrum(n, k))
        .collect::<Result<Vec<_>>>()?;
    let mut buf = y.values().to_vec();
    match q {
        EigenIndexSet::Box(tau) => {
            if tau.len() != dims.len() {
                return Err(KtfError::ShapeMismatch {
                    expected: dims.len(),
                    got: tau.len(),
                });
            }
            for (axis, s) in spectra.iter().enumerate() {
                let t = tau[axis].min(s.n);
                let v = s.vectors.columns(0, t);
                let proj = v * v.transpose();
                mode_product(dims, axis, &mut buf, &proj, false);
            }
        }
        EigenIndexSet::Set(idx) => {
            for (axis, s) in spectra.iter().enumerate() {
                mode_product(dims, axis, &mut buf, &s.vectors, true);
            }
            let mut keep = vec![false; shape.len()];
            for m in idx {
                keep[shape.flat_index(m)?] = true;
            }
            for (v, &kp) in buf.iter_mut().zip(&keep) {
                if !kp {
                    *v = 0.0;
                }
            }
            for (axis, s) in spectra.iter().enumerate() {
                mode_product(dims, axis, &mut buf, &s.vectors, false);
            }
        }
    }
    y.with_values(buf)
}

/// Coordinates of `y` in the tensor eigenbasis of `DᵀD`, in flat lattice order.
///
/// The basis is orthonormal, so squared distances are preserved.
pub fn eigen_coefficients(y: &GridSignal, k: usize) -> Result<GridSignal> {
    eigen_transform(y, k, true)
}

/// Inverse of [`eigen_coefficients`].
pub fn eigen_synthesis(c: &GridSignal, k: usize) -> Result<GridSignal> {
    eigen_transform(c, k, false)
}

fn eigen_transform(y: &GridSignal, k: usize, forward: bool) -> Result<GridSignal> {
    let shape = y.shape();
    if !shape.is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let dims = shape.dims();
    let mut buf = y.values().to_vec();
    for (axis, &n) in dims.iter().enumerate() {
        let s = axis_spectrum(n, k)?;
        mode_product(dims, axis, &mut buf, &s.vectors, forward);
    }
    y.with_values(buf)
}

/// `(DᵀD)⁺ y` by spectral division; zero eigenvalues are exactly zero, so the null part drops.
pub fn gram_pinv_apply(y: &GridSignal, k: usize) -> Result<GridSignal> {
    let coef = eigen_coefficients(y, k)?;
    let xi = gram_eigvals(y.shape(), k)?;
    let scaled = coef
        .values()
        .iter()
        .zip(xi.iter())
        .map(|(&c, e)| if e > 0.0 { c / e } else { 0.0 })
        .collect();
    eigen_synthesis(&coef.with_values(scaled)?, k)
}

/// Least-squares projection onto polynomials of max degree `k` over the lattice.
pub fn poly_projection(y: &GridSignal, k: usize) -> Result<GridSignal> {
    let shape = y.shape();
    let dims = shape.dims();
    let mut buf = y.values().to_vec();
    for (axis, &n) in dims.iter().enumerate() {
        if n < k + 1 {
            return Err(KtfError::DegenerateLattice {
                axis,
                size: n,
                needed: k + 1,
            });
        }
        let p = axis_poly_basis(shape.design(axis), k + 1);
        let proj = &p * p.transpose();
        mode_product(dims, axis, &mut buf, &proj, false);
    }
    y.with_values(buf)
}

/// Orthonormal basis of polynomials of degree `< count` evaluated at the design points.
fn axis_poly_basis(design: &[f64], count: usize) -> DMatrix<f64> {
    let n = design.len();
    let lo = design[0];
    let hi = design[n - 1];
    let (center, half) = ((lo + hi) / 2.0, ((hi - lo) / 2.0).max(f64::MIN_POSITIVE));
    let vander = DMatrix::from_fn(n, count, |i, p| {
        ((design[i] - center) / half).powi(p as i32)
    });
    let mut q = vander.clone();
    for _ in 0..2 {
        for p in 0..count {
            for c in 0..p {
                let dot = q.column(c).dot(&q.column(p));
                let col_c = q.column(c).clone_owned();
                q.column_mut(p).axpy(-dot, &col_c, 1.0);
            }
            let norm = q.column(p).norm();
            q.column_mut(p).scale_mut(1.0 / norm);
        }
    }
    q
}

/// Solves `(I + γ L^power) θ = y` by DCT diagonalization.
pub fn laplacian_smoother(y: &GridSignal, power: u32, gamma: f64) -> Result<GridSignal> {
    if !(power == 1 || power == 2) || !(gamma >= 0.0) {
        return Err(KtfError::InvalidArgument(
            "power must be 1 or 2 and gamma nonnegative".into(),
        ));
    }
    if !y.shape().is_uniform() {
        return Err(KtfError::NonUniform);
    }
    let dct = SeparableDct::new(y.shape().dims());
    let mut buf = y.values().to_vec();
    dct.filter(&mut buf, |mu| 1.0 / (1.0 + gamma * mu.powi(power as i32)));
    y.with_values(buf)
}

/// Nadaraya–Watson smoothing with a spherical Gaussian kernel over the design points.
pub fn kernel_smoother(y: &GridSignal, bandwidth: f64) -> Result<GridSignal> {
    if !(bandwidth > 0.0) {
        return Err(KtfError::InvalidArgument(
            "bandwidth must be positive".into(),
        ));
    }
    let shape = y.shape();
    let dims = shape.dims();
    let mut num = y.values().to_vec();
    let mut den = vec![1.0; shape.len()];
    for axis in 0..dims.len() {
        let z = shape.design(axis);
        let n = z.len();
        let w = DMatrix::from_fn(n, n, |i, j| {
            let t = (z[i] - z[j]) / bandwidth;
            (-0.5 * t * t).exp()
        });
        mode_product(dims, axis, &mut num, &w, false);
        mode_product(dims, axis, &mut den, &w, false);
    }
    let values = num.iter().zip(&den).map(|(a, b)| a / b).collect();
    y.with_values(values)
}

/// Box size `τ` with `τ^d = (C_n n^{s−1/2})^{1/s}`, `s = (k+1)/d`, clamped to `[k+2, N]`.
///
/// The proportionality constant is taken to be 1.
pub fn eigenmaps_tau(c_n: f64, n: usize, k: usize, d: usize, axis_len: usize) -> usize {
    let s = (k + 1) as f64 / d as f64;
    let tau_d = (c_n * (n as f64).powf(s - 0.5)).powf(1.0 / s);
    let tau = tau_d.powf(1.0 / d as f64).round();
    let lo = (k + 2).min(axis_len) as f64;
    tau.clamp(lo, axis_len as f64) as usize
}
