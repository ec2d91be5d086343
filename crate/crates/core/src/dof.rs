//! Degrees of freedom of a KTF fit: `nullity(D_{−A})`, with `A` the active penalty rows.
//!
//! The fast path builds polynomial pieces line by line and counts free
//! parameters while propagating known values across pieces. Its cost is
//! `O(n d (k+2))`. A dense rank computation serves as the test oracle.

use nalgebra::DMatrix;

use crate::error::{KtfError, Result};
use crate::lattice::{GridSignal, LatticeShape};
use crate::penalty::KroneckerPenalty;

/// Default relative threshold for calling a penalty row active.
pub const DEFAULT_ACTIVE_TOL: f64 = 1e-8;

/// Largest lattice accepted by [`dof_oracle_dense`].
pub const DENSE_ORACLE_CAP: usize = 5000;

/// Penalty rows with nonzero value at the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// Sorted row indices.
    pub rows: Vec<usize>,
    pub tol: f64,
    /// Total number of penalty rows `m`.
    pub m: usize,
}

impl ActiveSet {
    /// Row mask of length `m`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.m];
        for &r in &self.rows {
            mask[r] = true;
        }
        mask
    }
}

/// Rows `r` with `|(Dθ)_r| > tol · max(1, ‖Dθ‖_∞)`.
pub fn active_set(fit: &GridSignal, penalty: &KroneckerPenalty, tol: f64) -> Result<ActiveSet> {
    if !(tol >= 0.0) {
        return Err(KtfError::InvalidArgument("tol must be nonnegative".into()));
    }
    let d = penalty.apply(fit)?;
    let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let threshold = tol * scale;
    let rows = d
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(r, _)| r)
        .collect();
    Ok(ActiveSet {
        rows,
        tol,
        m: d.len(),
    })
}

#[derive(Debug, Clone)]
struct Piece {
    /// Flat index of the first site of the piece.
    first: usize,
    stride: usize,
    len: usize,
    knowns: usize,
    set: bool,
}

/// Pieces of all lines plus a CSR map from sites to the pieces containing them.
struct PieceTable {
    pieces: Vec<Piece>,
    offsets: Vec<usize>,
    members: Vec<u32>,
}

impl PieceTable {
    fn build(shape: &LatticeShape, k: usize, active: &[bool], penalty: &KroneckerPenalty) -> Self {
        let dims = shape.dims();
        let strides = shape.strides();
        let mut pieces = Vec::new();
        for axis in 0..dims.len() {
            let n = dims[axis];
            let rows_per_line = n.saturating_sub(k + 1);
            let block = penalty.block_range(axis);
            let inner: usize = dims[axis + 1..].iter().product();
            let outer: usize = dims[..axis].iter().product();
            for a in 0..outer {
                for b in 0..inner {
                    let first = a * n * inner + b;
                    let row_of = |j: usize| block.start + (a * rows_per_line + j) * inner + b;
                    make_pieces(
                        n,
                        k,
                        |j| active[row_of(j)],
                        |start, end| {
                            pieces.push(Piece {
                                first: first + start * strides[axis],
                                stride: strides[axis],
                                len: end - start + 1,
                                knowns: 0,
                                set: false,
                            })
                        },
                    );
                }
            }
        }
        let sites = shape.len();
        let mut offsets = vec![0usize; sites + 1];
        for p in &pieces {
            for t in 0..p.len {
                offsets[p.first + t * p.stride + 1] += 1;
            }
        }
        for i in 0..sites {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0u32; offsets[sites]];
        for (id, p) in pieces.iter().enumerate() {
            for t in 0..p.len {
                let site = p.first + t * p.stride;
                members[fill[site]] = id as u32;
                fill[site] += 1;
            }
        }
        Self {
            pieces,
            offsets,
            members,
        }
    }
}

/// Splits one line of `n` sites into pieces (0-based, inclusive ends).
///
/// A run of inactive rows `start..j` covers sites `start..=j+k`; an active row or
/// a site past the last row forms a one-site piece. Lines with `n ≤ k+1` are one piece.
fn make_pieces(
    n: usize,
    k: usize,
    is_active: impl Fn(usize) -> bool,
    mut emit: impl FnMut(usize, usize),
) {
    if n <= k + 1 {
        emit(0, n - 1);
        return;
    }
    let rows = n - k - 1;
    let mut j = 0;
    loop {
        let start = j;
        while j < rows && !is_active(j) {
            j += 1;
        }
        let end = if j != start { j + k } else { start };
        emit(start, end);
        if end == n - 1 {
            break;
        }
        j += 1;
    }
}

/// `nullity(D_{−A})` for an explicit row mask (`true` = active).
pub fn dof_from_active(shape: &LatticeShape, k: usize, active: &[bool]) -> Result<usize> {
    let penalty = KroneckerPenalty::new(shape, k)?;
    if active.len() != penalty.rows() {
        return Err(KtfError::ShapeMismatch {
            expected: penalty.rows(),
            got: active.len(),
        });
    }
    let mut table = PieceTable::build(shape, k, active, &penalty);
    let mut site_set = vec![false; shape.len()];
    let mut stack: Vec<usize> = Vec::new();
    let mut df = 0usize;
    for p in 0..table.pieces.len() {
        if table.pieces[p].set {
            continue;
        }
        let piece = &table.pieces[p];
        df += piece.len.min(k + 1).saturating_sub(piece.knowns);
        table.pieces[p].set = true;
        stack.push(p);
        // depth-first propagation; a piece is marked set when queued
        while let Some(q) = stack.pop() {
            let Piece {
                first, stride, len, ..
            } = table.pieces[q];
            for t in 0..len {
                let site = first + t * stride;
                if site_set[site] {
                    continue;
                }
                site_set[site] = true;
                for &other in &table.members[table.offsets[site]..table.offsets[site + 1]] {
                    let o = &mut table.pieces[other as usize];
                    if o.set {
                        continue;
                    }
                    o.knowns += 1;
                    if o.knowns > k {
                        o.set = true;
                        stack.push(other as usize);
                    }
                }
            }
        }
    }
    Ok(df)
}

/// Unbiased degrees-of-freedom estimate `nullity(D_{−A})` of a fit.
pub fn dof_estimate(fit: &GridSignal, k: usize, tol: f64) -> Result<usize> {
    let penalty = KroneckerPenalty::new(fit.shape(), k)?;
    let active = active_set(fit, &penalty, tol)?;
    dof_from_active(fit.shape(), k, &active.mask())
}

/// `n − rank(D_{−A})` from a dense SVD with relative rank tolerance `1e−9`.
pub fn dense_nullity(shape: &LatticeShape, k: usize, active: &[bool]) -> Result<usize> {
    let n = shape.len();
    if n > DENSE_ORACLE_CAP {
        return Err(KtfError::TooLarge {
            n,
            cap: DENSE_ORACLE_CAP,
        });
    }
    let penalty = KroneckerPenalty::new(shape, k)?;
    if active.len() != penalty.rows() {
        return Err(KtfError::ShapeMismatch {
            expected: penalty.rows(),
            got: active.len(),
        });
    }
    let keep: Vec<usize> = (0..penalty.rows()).filter(|&r| !active[r]).collect();
    if keep.is_empty() {
        return Ok(n);
    }
    let mut dense = DMatrix::zeros(keep.len(), n);
    let mut e = vec![0.0; n];
    for c in 0..n {
        e[c] = 1.0;
        let col = penalty.apply_slice(&e);
        for (row, &r) in keep.iter().enumerate() {
            dense[(row, c)] = col[r];
        }
        e[c] = 0.0;
    }
    let sv = dense.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-9 * smax).count();
    Ok(n - rank)
}

/// Dense-rank oracle for [`dof_estimate`].
pub fn dof_oracle_dense(fit: &GridSignal, k: usize, tol: f64) -> Result<usize> {
    let penalty = KroneckerPenalty::new(fit.shape(), k)?;
    let active = active_set(fit, &penalty, tol)?;
    dense_nullity(fit.shape(), k, &active.mask())
}
