//! Gathering axis-aligned lines of a row-major tensor into contiguous storage.

use rayon::prelude::*;

use crate::lattice::split_dims;

/// Copies every line along `axis` into a line-major buffer (`dims[axis]` values per line).
///
/// Lines are ordered by `(outer, inner)` index, matching [`LatticeShape::line_starts`](crate::LatticeShape::line_starts).
pub(crate) fn gather(dims: &[usize], axis: usize, buf: &[f64]) -> Vec<f64> {
    let (outer, n, inner) = split_dims(dims, axis);
    if inner == 1 {
        return buf.to_vec();
    }
    let mut lines = vec![0.0; buf.len()];
    for a in 0..outer {
        let block = &buf[a * n * inner..(a + 1) * n * inner];
        let dst = &mut lines[a * n * inner..(a + 1) * n * inner];
        for i in 0..n {
            for b in 0..inner {
                dst[b * n + i] = block[i * inner + b];
            }
        }
    }
    lines
}

/// Inverse of [`gather`].
pub(crate) fn scatter(dims: &[usize], axis: usize, lines: &[f64], buf: &mut [f64]) {
    let (outer, n, inner) = split_dims(dims, axis);
    if inner == 1 {
        buf.copy_from_slice(lines);
        return;
    }
    for a in 0..outer {
        let src = &lines[a * n * inner..(a + 1) * n * inner];
        let block = &mut buf[a * n * inner..(a + 1) * n * inner];
        for i in 0..n {
            for b in 0..inner {
                block[i * inner + b] = src[b * n + i];
            }
        }
    }
}

/// Applies `f` to every line along `axis` in place, in parallel over lines.
pub(crate) fn for_each_line_mut<F>(dims: &[usize], axis: usize, buf: &mut [f64], f: F)
where
    F: Fn(&mut [f64]) + Sync + Send,
{
    let n = dims[axis];
    if n == 0 || buf.is_empty() {
        return;
    }
    let mut lines = gather(dims, axis, buf);
    lines
        .par_chunks_mut(n)
        .with_min_len(par_min_len(n))
        .for_each(f);
    scatter(dims, axis, &lines, buf);
}

/// Lines handed to one rayon task at a time.
pub(crate) fn par_min_len(n: usize) -> usize {
    (2048 / n.max(1)).max(1)
}
