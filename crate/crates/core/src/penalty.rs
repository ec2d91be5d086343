//! Difference operators and the Kronecker trend filtering penalty.
//!
//! Every operator here is matrix-free. Rows of the Kronecker penalty are
//! ordered axis-major: block `j` holds the order-`(k+1)` differences along
//! axis `j`, and inside a block rows follow the lattice order of the retained
//! multi-indices (last axis fastest). This is the row order of the stacked
//! Kronecker products `I ⊗ ... ⊗ D ⊗ ... ⊗ I`.

use rayon::prelude::*;

use crate::error::{KtfError, Result};
use crate::lattice::{evenly_spaced, split_dims, GridSignal, LatticeShape};

/// Output length above which axis kernels run in parallel.
const PAR_MIN_LEN: usize = 1 << 15;

/// A univariate difference operator stored as a banded coefficient table.
///
/// Row `r` has support on columns `r..=r + order`. Order 0 is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Diff1d {
    n: usize,
    order: usize,
    coeffs: Vec<f64>,
}

impl Diff1d {
    /// Pure differences: binomial stencils with alternating signs, no spacing factors.
    pub fn uniform(n: usize, order: usize) -> Self {
        let rows = n.saturating_sub(order);
        let stencil = binomial_stencil(order);
        let mut coeffs = Vec::with_capacity(rows * (order + 1));
        for _ in 0..rows {
            coeffs.extend_from_slice(&stencil);
        }
        Self { n, order, coeffs }
    }

    /// Builds the order-`order` operator for a design.
    ///
    /// Evenly spaced designs get plain differences; other designs use the weighted
    /// recursion `D^(m+1) = D^(1) · diag(m / (z_{i+m} - z_i)) · D^(m)`.
    pub fn build(design: &[f64], order: usize) -> Result<Self> {
        if design.iter().any(|v| !v.is_finite()) || design.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KtfError::NonIncreasingDesign);
        }
        if evenly_spaced(design) {
            return Ok(Self::uniform(design.len(), order));
        }
        Ok(Self::weighted(design, order))
    }

    fn weighted(design: &[f64], order: usize) -> Self {
        let n = design.len();
        let mut current = Self::uniform(n, order.min(1));
        for m in 1..order {
            let rows = n.saturating_sub(m + 1);
            let width = m + 2;
            let mut coeffs = vec![0.0; rows * width];
            for r in 0..rows {
                let lo = m as f64 / (design[r + m] - design[r]);
                let hi = m as f64 / (design[r + 1 + m] - design[r + 1]);
                let prev_lo = current.row(r);
                let prev_hi = current.row(r + 1);
                let row = &mut coeffs[r * width..(r + 1) * width];
                for s in 0..=m {
                    row[s] -= lo * prev_lo[s];
                    row[s + 1] += hi * prev_hi[s];
                }
            }
            current = Self {
                n,
                order: m + 1,
                coeffs,
            };
        }
        current
    }

    /// Number of columns.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of rows, `max(N - order, 0)`.
    pub fn rows(&self) -> usize {
        self.n.saturating_sub(self.order)
    }

    /// Coefficients of row `r`, acting on columns `r..=r + order`.
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.order + 1;
        &self.coeffs[r * w..(r + 1) * w]
    }

    fn abs(&self) -> Self {
        Self {
            n: self.n,
            order: self.order,
            coeffs: self.coeffs.iter().map(|c| c.abs()).collect(),
        }
    }

    /// `out = D x` for a single vector of length `n`.
    pub fn apply_vec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows()) {
            *o = self.row(r).iter().zip(&x[r..]).map(|(c, v)| c * v).sum();
        }
    }

    /// `out = Dᵀ v` for a single vector of length `rows`.
    pub fn apply_transpose_vec(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &vr) in v.iter().enumerate().take(self.rows()) {
            for (s, c) in self.row(r).iter().enumerate() {
                out[r + s] += c * vr;
            }
        }
    }

    /// Applies `D` along `axis` of a row-major tensor of shape `dims`
    /// (`dims[axis] == n`), writing a tensor whose `axis` length is `rows`.
    pub(crate) fn apply_axis(&self, dims: &[usize], axis: usize, x: &[f64], out: &mut [f64]) {
        let (_, n, inner) = split_dims(dims, axis);
        debug_assert_eq!(n, self.n);
        let rows = self.rows();
        if rows == 0 || inner == 0 {
            return;
        }
        let body = |(c, chunk): (usize, &mut [f64])| {
            let (a, r) = (c / rows, c % rows);
            chunk.iter_mut().for_each(|o| *o = 0.0);
            for (s, &w) in self.row(r).iter().enumerate() {
                let src = &x[(a * n + r + s) * inner..][..inner];
                for (o, &v) in chunk.iter_mut().zip(src) {
                    *o += w * v;
                }
            }
        };
        if out.len() >= PAR_MIN_LEN {
            let min_len = (4096 / inner).max(1);
            out.par_chunks_mut(inner)
                .enumerate()
                .with_min_len(min_len)
                .for_each(body);
        } else {
            out.chunks_mut(inner).enumerate().for_each(body);
        }
    }

    /// Adds `Dᵀ v` along `axis` into `out` (shape `dims`, `dims[axis] == n`).
    pub(crate) fn apply_axis_transpose_add(
        &self,
        dims: &[usize],
        axis: usize,
        v: &[f64],
        out: &mut [f64],
    ) {
        let (_, n, inner) = split_dims(dims, axis);
        debug_assert_eq!(n, self.n);
        let rows = self.rows();
        if rows == 0 || inner == 0 {
            return;
        }
        let order = self.order;
        let body = |(c, chunk): (usize, &mut [f64])| {
            let (a, col) = (c / n, c % n);
            let r_lo = col.saturating_sub(order);
            let r_hi = col.min(rows - 1);
            for r in r_lo..=r_hi {
                let w = self.row(r)[col - r];
                let src = &v[(a * rows + r) * inner..][..inner];
                for (o, &s) in chunk.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        };
        if out.len() >= PAR_MIN_LEN {
            let min_len = (4096 / inner).max(1);
            out.par_chunks_mut(inner)
                .enumerate()
                .with_min_len(min_len)
                .for_each(body);
        } else {
            out.chunks_mut(inner).enumerate().for_each(body);
        }
    }
}

/// `(-1)^(m-s) C(m, s)` for `s = 0..=m`.
fn binomial_stencil(m: usize) -> Vec<f64> {
    let mut c = vec![1.0f64];
    for _ in 0..m {
        let mut next = vec![0.0; c.len() + 1];
        for (s, &v) in c.iter().enumerate() {
            next[s] -= v;
            next[s + 1] += v;
        }
        c = next;
    }
    c
}

/// Builds a univariate difference operator of the given order for a design.
pub fn build_diff_1d(design: &[f64], order: usize) -> Result<Diff1d> {
    Diff1d::build(design, order)
}

/// The stacked Kronecker difference operator `D^(order)_{n,d}`.
///
/// `order = k + 1` gives the KTF penalty; `order = 0` gives `d` stacked identities.
#[derive(Debug, Clone)]
pub struct KroneckerPenalty {
    shape: LatticeShape,
    order: usize,
    diffs: Vec<Diff1d>,
    offsets: Vec<usize>,
    rows: usize,
}

impl KroneckerPenalty {
    /// The order-`k+1` KTF penalty on `shape`.
    pub fn new(shape: &LatticeShape, k: usize) -> Result<Self> {
        Self::with_order(shape, k + 1)
    }

    pub fn with_order(shape: &LatticeShape, order: usize) -> Result<Self> {
        let diffs = shape
            .designs()
            .iter()
            .map(|z| Diff1d::build(z, order))
            .collect::<Result<Vec<_>>>()?;
        let mut offsets = Vec::with_capacity(diffs.len() + 1);
        let mut rows = 0;
        for (axis, diff) in diffs.iter().enumerate() {
            offsets.push(rows);
            rows += diff.rows() * shape.len() / shape.dims()[axis];
        }
        offsets.push(rows);
        Ok(Self {
            shape: shape.clone(),
            order,
            diffs,
            offsets,
            rows,
        })
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    /// Difference order (`k + 1` for the KTF penalty).
    pub fn order(&self) -> usize {
        self.order
    }

    /// Polynomial order `k = order - 1`; `None` for the order-0 stack.
    pub fn k(&self) -> Option<usize> {
        self.order.checked_sub(1)
    }

    /// Total row count `m`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.len()
    }

    pub fn diff(&self, axis: usize) -> &Diff1d {
        &self.diffs[axis]
    }

    /// Row range of the block for `axis`.
    pub fn block_range(&self, axis: usize) -> std::ops::Range<usize> {
        self.offsets[axis]..self.offsets[axis + 1]
    }

    /// Shape of block `axis` as a tensor: the lattice dims with `dims[axis]` replaced by the row count.
    pub fn block_dims(&self, axis: usize) -> Vec<usize> {
        let mut dims = self.shape.dims().to_vec();
        dims[axis] = self.diffs[axis].rows();
        dims
    }

    /// `out = D x` on raw slices.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        debug_assert_eq!(out.len(), self.rows);
        let dims = self.shape.dims();
        for (axis, diff) in self.diffs.iter().enumerate() {
            let range = self.block_range(axis);
            diff.apply_axis(dims, axis, x, &mut out[range]);
        }
    }

    /// `out = Dᵀ v` on raw slices.
    pub fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols());
        out.iter_mut().for_each(|o| *o = 0.0);
        let dims = self.shape.dims();
        for (axis, diff) in self.diffs.iter().enumerate() {
            diff.apply_axis_transpose_add(dims, axis, &v[self.block_range(axis)], out);
        }
    }

    pub fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_transpose_slice(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols()];
        self.apply_transpose_into(v, &mut out);
        out
    }

    fn check_signal(&self, theta: &GridSignal) -> Result<()> {
        if theta.shape().dims() != self.shape.dims() {
            return Err(KtfError::ShapeMismatch {
                expected: self.cols(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// Signed stacked differences `D θ`, length `m`.
    pub fn apply(&self, theta: &GridSignal) -> Result<Vec<f64>> {
        self.check_signal(theta)?;
        Ok(self.apply_slice(theta.values()))
    }

    /// Adjoint of [`apply`](Self::apply).
    pub fn apply_transpose(&self, v: &[f64]) -> Result<GridSignal> {
        if v.len() != self.rows {
            return Err(KtfError::ShapeMismatch {
                expected: self.rows,
                got: v.len(),
            });
        }
        GridSignal::new(self.shape.clone(), self.apply_transpose_slice(v))
    }

    /// Kronecker total variation `‖D θ‖₁`.
    pub fn ktv(&self, theta: &GridSignal) -> Result<f64> {
        Ok(self.apply(theta)?.iter().map(|v| v.abs()).sum())
    }

    /// Factorizes `D^(k+1) = M^(k+1-j) · D^(j)` for `0 <= j <= k+1`.
    pub fn decompose(&self, j: usize) -> Result<Decomposition> {
        if j > self.order {
            return Err(KtfError::SplitOutOfRange { j, max: self.order });
        }
        if !self.shape.is_uniform() {
            return Err(KtfError::NonUniform);
        }
        let inner = Self::with_order(&self.shape, j)?;
        let outer_order = self.order - j;
        let mut blocks = Vec::with_capacity(self.shape.ndim());
        let (mut in_off, mut out_off) = (0, 0);
        for axis in 0..self.shape.ndim() {
            let dims = inner.block_dims(axis);
            let diff = Diff1d::uniform(dims[axis], outer_order);
            let in_len: usize = dims.iter().product();
            let out_len = in_len.checked_div(dims[axis]).unwrap_or(0) * diff.rows();
            blocks.push(AxisBlock {
                dims,
                axis,
                diff,
                in_offset: in_off,
                out_offset: out_off,
            });
            in_off += in_len;
            out_off += out_len;
        }
        Ok(Decomposition {
            outer: BlockDiagDiff {
                blocks,
                cols: in_off,
                rows: out_off,
            },
            inner,
        })
    }

    /// Null-space dimension `(k+1)^d`.
    pub fn nullity(&self) -> Result<usize> {
        if self.order == 0 {
            return Ok(0);
        }
        for (axis, &n) in self.shape.dims().iter().enumerate() {
            if n < self.order {
                return Err(KtfError::DegenerateLattice {
                    axis,
                    size: n,
                    needed: self.order,
                });
            }
        }
        Ok(self.order.pow(self.shape.ndim() as u32))
    }

    /// Largest column ℓ1 norm of `D` (its `‖·‖_{1,∞}` norm over columns).
    pub fn max_row_l1(&self) -> f64 {
        let ones = vec![1.0; self.rows];
        let dims = self.shape.dims();
        let mut colsum = vec![0.0; self.cols()];
        for (axis, diff) in self.diffs.iter().enumerate() {
            diff.abs().apply_axis_transpose_add(
                dims,
                axis,
                &ones[self.block_range(axis)],
                &mut colsum,
            );
        }
        colsum.into_iter().fold(0.0, f64::max)
    }
}

/// One diagonal block of [`BlockDiagDiff`]: differences along `axis` of a tensor of shape `dims`.
#[derive(Debug, Clone)]
pub struct AxisBlock {
    pub dims: Vec<usize>,
    pub axis: usize,
    pub diff: Diff1d,
    pub in_offset: usize,
    pub out_offset: usize,
}

impl AxisBlock {
    pub fn in_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn out_dims(&self) -> Vec<usize> {
        let mut d = self.dims.clone();
        d[self.axis] = self.diff.rows();
        d
    }

    pub fn out_len(&self) -> usize {
        self.out_dims().iter().product()
    }
}

/// The block-diagonal map `M^(k+1-j)` acting line-wise inside each axis block of `D^(j) θ`.
#[derive(Debug, Clone)]
pub struct BlockDiagDiff {
    blocks: Vec<AxisBlock>,
    cols: usize,
    rows: usize,
}

impl BlockDiagDiff {
    pub fn blocks(&self) -> &[AxisBlock] {
        &self.blocks
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Difference order applied inside every block.
    pub fn order(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.diff.order())
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for b in &self.blocks {
            let input = &z[b.in_offset..b.in_offset + b.in_len()];
            let output = &mut out[b.out_offset..b.out_offset + b.out_len()];
            if b.dims[b.axis] > 0 {
                b.diff.apply_axis(&b.dims, b.axis, input, output);
            }
        }
        out
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for b in &self.blocks {
            let input = &v[b.out_offset..b.out_offset + b.out_len()];
            let output = &mut out[b.in_offset..b.in_offset + b.in_len()];
            if b.dims[b.axis] > 0 {
                b.diff
                    .apply_axis_transpose_add(&b.dims, b.axis, input, output);
            }
        }
        out
    }
}

/// Result of [`KroneckerPenalty::decompose`]: `D^(k+1) = outer ∘ inner`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub outer: BlockDiagDiff,
    pub inner: KroneckerPenalty,
}

impl Decomposition {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.outer.apply(&self.inner.apply_slice(x))
    }
}
