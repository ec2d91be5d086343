//! Lattice geometry, index conversion, axis-aligned lines and forward differences.
//!
//! Signals are stored flat in row-major order over `(i_1, ..., i_d)`: the last
//! axis varies fastest. Under this convention a Kronecker product
//! `A_1 ⊗ A_2 ⊗ ... ⊗ A_d` acts with its first factor on axis 0.
//!
//! Axes are 0-based (`0..d`). Coordinates inside a [`MultiIndex`] are 1-based,
//! so that `(1, ..., 1)` is the lattice origin.

use crate::error::{KtfError, Result};

/// Relative tolerance used to decide whether an axis design is evenly spaced.
const SPACING_RTOL: f64 = 1e-9;

/// A Cartesian lattice `z_1 × ... × z_d` of strictly increasing design points.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeShape {
    dims: Vec<usize>,
    designs: Vec<Vec<f64>>,
    even: Vec<bool>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticeShape {
    /// The canonical lattice with design points `i / N_j`, `i = 1..=N_j`, per axis.
    pub fn uniform(dims: &[usize]) -> Result<Self> {
        let designs = dims
            .iter()
            .map(|&n| (1..=n).map(|i| i as f64 / n as f64).collect())
            .collect();
        Self::with_designs(designs)
    }

    /// A general lattice from per-axis design points.
    pub fn with_designs(designs: Vec<Vec<f64>>) -> Result<Self> {
        if designs.is_empty() {
            return Err(KtfError::InvalidLattice(
                "lattice needs at least one axis".into(),
            ));
        }
        let dims: Vec<usize> = designs.iter().map(Vec::len).collect();
        if let Some(axis) = dims.iter().position(|&n| n == 0) {
            return Err(KtfError::InvalidLattice(format!("axis {axis} is empty")));
        }
        for z in &designs {
            if z.iter().any(|v| !v.is_finite()) || z.windows(2).any(|w| w[1] <= w[0]) {
                return Err(KtfError::NonIncreasingDesign);
            }
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| KtfError::InvalidLattice("lattice size overflows usize".into()))?;
        let mut strides = vec![1usize; dims.len()];
        for a in (0..dims.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let even = designs.iter().map(|z| evenly_spaced(z)).collect();
        Ok(Self {
            dims,
            designs,
            even,
            strides,
            len,
        })
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total number of sites `n`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn design(&self, axis: usize) -> &[f64] {
        &self.designs[axis]
    }

    pub fn designs(&self) -> &[Vec<f64>] {
        &self.designs
    }

    /// True when the given axis has equal gaps between consecutive design points.
    pub fn is_axis_even(&self, axis: usize) -> bool {
        self.even[axis]
    }

    /// True when every axis is evenly spaced.
    pub fn is_uniform(&self) -> bool {
        self.even.iter().all(|&e| e)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.ndim() {
            return Err(KtfError::InvalidArgument(format!(
                "axis {axis} out of range for a {}-dimensional lattice",
                self.ndim()
            )));
        }
        Ok(())
    }

    /// Flat position of a multi-index.
    pub fn flat_index(&self, idx: &MultiIndex) -> Result<usize> {
        if idx.0.len() != self.ndim() {
            return Err(KtfError::ShapeMismatch {
                expected: self.ndim(),
                got: idx.0.len(),
            });
        }
        let mut flat = 0;
        for (axis, (&c, &n)) in idx.0.iter().zip(&self.dims).enumerate() {
            if c == 0 || c > n {
                return Err(KtfError::OutOfBounds {
                    axis,
                    coord: c,
                    size: n,
                });
            }
            flat += (c - 1) * self.strides[axis];
        }
        Ok(flat)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn multi_index(&self, flat: usize) -> Result<MultiIndex> {
        if flat >= self.len {
            return Err(KtfError::OutOfBounds {
                axis: 0,
                coord: flat,
                size: self.len,
            });
        }
        let coords = self
            .strides
            .iter()
            .zip(&self.dims)
            .map(|(&s, &n)| (flat / s) % n + 1)
            .collect();
        Ok(MultiIndex(coords))
    }

    /// Design-point coordinates of a flat site.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.strides
            .iter()
            .zip(&self.dims)
            .zip(&self.designs)
            .map(|((&s, &n), z)| z[(flat / s) % n])
            .collect()
    }

    /// Flat index of the first site of every line along `axis`, in increasing order.
    pub fn line_starts(&self, axis: usize) -> Result<Vec<usize>> {
        self.check_axis(axis)?;
        let (outer, n, inner) = split_dims(&self.dims, axis);
        let mut starts = Vec::with_capacity(outer * inner);
        for a in 0..outer {
            for b in 0..inner {
                starts.push(a * n * inner + b);
            }
        }
        Ok(starts)
    }

    /// All axis-aligned lines along `axis`, each listing its sites in increasing coordinate order.
    pub fn lines(&self, axis: usize) -> Result<Vec<Vec<usize>>> {
        let stride = self.strides.get(axis).copied().unwrap_or(1);
        let n = self.dims.get(axis).copied().unwrap_or(0);
        Ok(self
            .line_starts(axis)?
            .into_iter()
            .map(|s| (0..n).map(|i| s + i * stride).collect())
            .collect())
    }
}

pub(crate) fn evenly_spaced(z: &[f64]) -> bool {
    if z.len() < 3 {
        return true;
    }
    let h = (z[z.len() - 1] - z[0]) / (z.len() - 1) as f64;
    z.windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= SPACING_RTOL * h)
}

/// Splits `dims` around `axis` into `(outer, dims[axis], inner)` products.
pub(crate) fn split_dims(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// A lattice position with 1-based coordinates `i_j ∈ [N_j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(coords: Vec<usize>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

/// A real value per lattice site, stored flat with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSignal {
    shape: LatticeShape,
    values: Vec<f64>,
}

impl GridSignal {
    pub fn new(shape: LatticeShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(KtfError::ShapeMismatch {
                expected: shape.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(KtfError::InvalidArgument(
                "signal contains non-finite values".into(),
            ));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: LatticeShape) -> Self {
        let values = vec![0.0; shape.len()];
        Self { shape, values }
    }

    /// Evaluates `f` at the design-point coordinates of every site.
    pub fn from_fn(shape: LatticeShape, mut f: impl FnMut(&[f64]) -> f64) -> Result<Self> {
        let values = (0..shape.len()).map(|i| f(&shape.point(i))).collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, idx: &MultiIndex) -> Result<f64> {
        Ok(self.values[self.shape.flat_index(idx)?])
    }

    /// A signal on the same lattice with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.shape.clone(), values)
    }
}

/// Applies the one-step forward difference along `axis` `order` times.
///
/// Sites whose order-`order` stencil leaves the lattice carry 0, so the output
/// has the same shape as the input. Plain differences: design spacing is ignored.
pub fn forward_diff(signal: &GridSignal, axis: usize, order: usize) -> Result<GridSignal> {
    let shape = signal.shape();
    shape.check_axis(axis)?;
    let (outer, n, inner) = split_dims(shape.dims(), axis);
    let mut out = signal.values().to_vec();
    if order == 0 {
        return signal.with_values(out);
    }
    let mut line = vec![0.0; n];
    for a in 0..outer {
        for b in 0..inner {
            let base = a * n * inner + b;
            for (i, v) in line.iter_mut().enumerate() {
                *v = out[base + i * inner];
            }
            for step in 0..order.min(n) {
                for i in 0..n - 1 - step {
                    line[i] = line[i + 1] - line[i];
                }
            }
            for i in n.saturating_sub(order)..n {
                line[i] = 0.0;
            }
            for (i, v) in line.iter().enumerate() {
                out[base + i * inner] = *v;
            }
        }
    }
    signal.with_values(out)
}
