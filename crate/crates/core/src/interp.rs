//! Off-lattice evaluation of a fit through discrete-spline interpolation.
//!
//! A fit on the lattice extends uniquely to the tensor product of `k`th degree
//! discrete splines with knots at the interior design points. Evaluation needs
//! only the `(k+1)^d` lattice values around the query: one locate per axis,
//! then a one-unknown divided-difference equation per reduction step.
//! Queries outside the design range extrapolate with the boundary polynomial.

use rayon::prelude::*;

use crate::error::{KtfError, Result};
use crate::lattice::{GridSignal, LatticeShape};

/// Largest lattice accepted by [`basis_oracle_eval`].
pub const BASIS_ORACLE_CAP: usize = 10_000;

/// Function values at distinct points, for divided differences.
#[derive(Debug, Clone, PartialEq)]
pub struct DividedDiffTable {
    points: Vec<f64>,
    values: Vec<f64>,
}

impl DividedDiffTable {
    pub fn new(points: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if points.len() != values.len() {
            return Err(KtfError::ShapeMismatch {
                expected: points.len(),
                got: values.len(),
            });
        }
        if points.is_empty() {
            return Err(KtfError::InvalidArgument(
                "divided difference needs at least one point".into(),
            ));
        }
        for (i, a) in points.iter().enumerate() {
            if points[..i].contains(a) {
                return Err(KtfError::RepeatedPoint(*a));
            }
        }
        Ok(Self { points, values })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `f[z_1, …, z_r]` by the triangular recursion.
    pub fn value(&self) -> f64 {
        let z = &self.points;
        let mut col = self.values.clone();
        for level in 1..z.len() {
            for i in 0..z.len() - level {
                col[i] = (col[i + 1] - col[i]) / (z[i + level] - z[i]);
            }
        }
        col[0]
    }

    /// The value `f(x)` solving `f[z_1, …, z_r, x] = 0`.
    ///
    /// Expanding the last column gives `f[z, x] = Σ_i f(z_i) c_i + f(x) c_x` with
    /// `c_i = 1 / Π_{j≠i}(z_i − z_j)` over all `r+1` points, so the root is closed form.
    pub fn solve_appended(&self, x: f64) -> Result<f64> {
        if let Some(i) = self.points.iter().position(|&z| z == x) {
            return Err(KtfError::RepeatedPoint(self.points[i]));
        }
        let mut w = vec![0.0; self.points.len()];
        lagrange_weights(&self.points, x, &mut w);
        Ok(w.iter().zip(&self.values).map(|(a, b)| a * b).sum())
    }
}

/// Divided difference `f[z_1, …, z_r]` of `values` at distinct `points`.
pub fn divided_difference(points: &[f64], values: &[f64]) -> Result<f64> {
    Ok(DividedDiffTable::new(points.to_vec(), values.to_vec())?.value())
}

/// Weights `w_i` with `f(x) = Σ_i w_i f(z_i)` for the polynomial through `(z_i, f(z_i))`.
///
/// This is `−c_i / c_x` from the divided-difference expansion. At `x = z_i` the
/// weights are exactly the `i`th unit vector.
fn lagrange_weights(z: &[f64], x: f64, w: &mut [f64]) {
    for i in 0..z.len() {
        let mut p = 1.0;
        for j in 0..z.len() {
            if j != i {
                p *= (x - z[j]) / (z[i] - z[j]);
            }
        }
        w[i] = p;
    }
}

/// Smallest 0-based `i` with `x ≤ z_i`, or `z.len()` when `x` exceeds every point.
fn locate(z: &[f64], x: f64, even: bool) -> usize {
    let n = z.len();
    if !even || n < 2 {
        return z.partition_point(|&v| v < x);
    }
    let h = (z[n - 1] - z[0]) / (n - 1) as f64;
    let guess = ((x - z[0]) / h).ceil();
    let mut i = if guess.is_nan() || guess <= 0.0 {
        0
    } else if guess >= n as f64 {
        n
    } else {
        guess as usize
    };
    while i > 0 && x <= z[i - 1] {
        i -= 1;
    }
    while i < n && x > z[i] {
        i += 1;
    }
    i
}

/// First index of the `k+1` consecutive design points used for a query located at `i`.
fn stencil_start(i: usize, n: usize, k: usize) -> usize {
    i.saturating_sub(k).min(n - k - 1)
}

/// Univariate discrete-spline interpolation of `theta` on `design` at `x`.
pub fn interpolate_1d(design: &[f64], theta: &[f64], x: f64, k: usize) -> Result<f64> {
    if design.len() != theta.len() {
        return Err(KtfError::ShapeMismatch {
            expected: design.len(),
            got: theta.len(),
        });
    }
    let n = design.len();
    if n < k + 1 {
        return Err(KtfError::DegenerateLattice {
            axis: 0,
            size: n,
            needed: k + 1,
        });
    }
    if design.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KtfError::NonIncreasingDesign);
    }
    let i = locate(design, x, crate::lattice::evenly_spaced(design));
    if i < n && design[i] == x {
        return Ok(theta[i]);
    }
    // f[x_{i−k}, …, x_i, x] = 0 right of x_{k+1}; f[x_1, …, x_{k+1}, x] = 0 left of it
    let start = stencil_start(i, n, k);
    let mut w = vec![0.0; k + 1];
    lagrange_weights(&design[start..=start + k], x, &mut w);
    Ok(w.iter()
        .zip(&theta[start..=start + k])
        .map(|(a, b)| a * b)
        .sum())
}

fn check_interp_args(shape: &LatticeShape, x: &[f64], k: usize) -> Result<()> {
    if x.len() != shape.ndim() {
        return Err(KtfError::ShapeMismatch {
            expected: shape.ndim(),
            got: x.len(),
        });
    }
    if let Some(axis) = shape.dims().iter().position(|&n| n < k + 1) {
        return Err(KtfError::DegenerateLattice {
            axis,
            size: shape.dims()[axis],
            needed: k + 1,
        });
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(KtfError::InvalidArgument(format!(
            "query coordinate {v} is not finite"
        )));
    }
    Ok(())
}

/// Tensor discrete-spline interpolation of a lattice fit at `x`.
///
/// Axis by axis, the query picks the `k+1` slices `ℓ..ℓ+k` with
/// `ℓ = min(max(i − k, 1), N − k)` and `i` the smallest index with `x ≤ z_i`.
/// The slice values come from the same procedure in one dimension less and are
/// then combined by the one-dimensional rule along the axis.
pub fn interpolate(theta: &GridSignal, x: &[f64], k: usize) -> Result<f64> {
    let shape = theta.shape();
    check_interp_args(shape, x, k)?;
    Ok(eval_unchecked(theta, x, k))
}

/// [`interpolate`] over many queries, evaluated in parallel.
pub fn interpolate_batch(theta: &GridSignal, queries: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    for q in queries {
        check_interp_args(theta.shape(), q, k)?;
    }
    Ok(queries
        .par_iter()
        .map(|q| eval_unchecked(theta, q, k))
        .collect())
}

fn eval_unchecked(theta: &GridSignal, x: &[f64], k: usize) -> f64 {
    let shape = theta.shape();
    let d = shape.ndim();
    let m = k + 1;
    // per-axis stencil start and weights, laid out as d rows of k+1
    let mut starts = vec![0usize; d];
    let mut weights = vec![0.0; d * m];
    for a in 0..d {
        let z = shape.design(a);
        let i = locate(z, x[a], shape.is_axis_even(a));
        let s = stencil_start(i, z.len(), k);
        starts[a] = s;
        lagrange_weights(&z[s..s + m], x[a], &mut weights[a * m..(a + 1) * m]);
    }
    // gather the (k+1)^d stencil, then contract from the last axis inward
    let strides = shape.strides();
    let values = theta.values();
    let total = m.pow(d as u32);
    let mut buf = Vec::with_capacity(total);
    let base: usize = (0..d).map(|a| starts[a] * strides[a]).sum();
    let mut offs = vec![0usize; d];
    for _ in 0..total {
        let flat = base + (0..d).map(|a| offs[a] * strides[a]).sum::<usize>();
        buf.push(values[flat]);
        for a in (0..d).rev() {
            offs[a] += 1;
            if offs[a] < m {
                break;
            }
            offs[a] = 0;
        }
    }
    let mut len = total;
    for a in (0..d).rev() {
        len /= m;
        let w = &weights[a * m..(a + 1) * m];
        for j in 0..len {
            buf[j] = (0..m).map(|p| w[p] * buf[j * m + p]).sum();
        }
    }
    buf[0]
}

/// Falling factorial basis function `h_i(x)` of degree `k` on `design`, `i` 1-based.
///
/// `i ≤ k+1`: `Π_{j<i}(x − z_j)/(i−1)!`. `i ≥ k+2`: `Π_{j=i−k}^{i−1}(x − z_j)/k! · 1{x > z_{i−1}}`.
pub fn ffb_eval(i: usize, x: f64, design: &[f64], k: usize) -> f64 {
    assert!(i >= 1 && i <= design.len(), "basis index {i} out of range");
    if i <= k + 1 {
        let mut p = 1.0;
        for j in 1..i {
            p *= (x - design[j - 1]) / j as f64;
        }
        p
    } else {
        if x <= design[i - 2] {
            return 0.0;
        }
        let mut p = 1.0;
        for (t, j) in (i - k..i).enumerate() {
            p *= (x - design[j - 1]) / (t + 1) as f64;
        }
        p
    }
}

/// Basis matrix `H_{ab} = h_b(z_a)`, lower triangular with nonzero diagonal.
fn basis_matrix(design: &[f64], k: usize) -> Vec<Vec<f64>> {
    let n = design.len();
    (0..n)
        .map(|a| {
            (1..=a + 1)
                .map(|b| ffb_eval(b, design[a], design, k))
                .collect()
        })
        .collect()
}

/// Reference evaluation through the falling factorial expansion `Σ α h_{i_1}(x_1) ⋯ h_{i_d}(x_d)`.
///
/// Solves `(H_1 ⊗ ⋯ ⊗ H_d) α = θ` by forward substitution along each axis, then sums
/// the expansion at `x`. Cost is `O(n · max N_j)`; meant as a test oracle.
pub fn basis_oracle_eval(theta: &GridSignal, x: &[f64], k: usize) -> Result<f64> {
    let shape = theta.shape();
    check_interp_args(shape, x, k)?;
    if shape.len() > BASIS_ORACLE_CAP {
        return Err(KtfError::TooLarge {
            n: shape.len(),
            cap: BASIS_ORACLE_CAP,
        });
    }
    let alpha = basis_coefficients(theta, k);
    let dims = shape.dims();
    let evals: Vec<Vec<f64>> = (0..shape.ndim())
        .map(|a| {
            (1..=dims[a])
                .map(|i| ffb_eval(i, x[a], shape.design(a), k))
                .collect()
        })
        .collect();
    let strides = shape.strides();
    Ok(alpha
        .iter()
        .enumerate()
        .map(|(flat, c)| {
            let mut p = *c;
            for a in 0..dims.len() {
                p *= evals[a][flat / strides[a] % dims[a]];
            }
            p
        })
        .sum())
}

/// Coefficients `α` of the falling factorial expansion interpolating `theta`.
pub fn basis_coefficients(theta: &GridSignal, k: usize) -> Vec<f64> {
    let shape = theta.shape();
    let dims = shape.dims();
    let mut alpha = theta.values().to_vec();
    for axis in 0..dims.len() {
        let h = basis_matrix(shape.design(axis), k);
        let n = dims[axis];
        let stride = shape.strides()[axis];
        let mut line = vec![0.0; n];
        for start in shape.line_starts(axis).expect("axis in range") {
            for (t, v) in line.iter_mut().enumerate() {
                *v = alpha[start + t * stride];
            }
            for a in 0..n {
                let s: f64 = (0..a).map(|b| h[a][b] * line[b]).sum();
                line[a] = (line[a] - s) / h[a][a];
            }
            for (t, v) in line.iter().enumerate() {
                alpha[start + t * stride] = *v;
            }
        }
    }
    alpha
}

/// Kronecker total variation of the `k = 0` interpolant, measured on the continuum.
///
/// Each axis-parallel line through lattice cross-sections is sampled once inside
/// every constancy interval of the step function, including both unbounded ends,
/// and the sampled total variation is summed over lines and axes.
pub fn ktv_of_interpolant_k0(theta: &GridSignal) -> Result<f64> {
    let shape = theta.shape();
    let d = shape.ndim();
    let mut total = 0.0;
    for axis in 0..d {
        let z = shape.design(axis);
        let n = z.len();
        let mut samples = Vec::with_capacity(2 * n + 1);
        let gap = if n > 1 { z[1] - z[0] } else { 1.0 };
        samples.push(z[0] - gap);
        for i in 0..n {
            samples.push(z[i]);
            samples.push(if i + 1 < n {
                0.5 * (z[i] + z[i + 1])
            } else {
                z[i] + gap
            });
        }
        for start in shape.line_starts(axis)? {
            let mut x = shape.point(start);
            let mut prev: Option<f64> = None;
            for &s in &samples {
                x[axis] = s;
                let v = interpolate(theta, &x, 0)?;
                if let Some(p) = prev {
                    total += (v - p).abs();
                }
                prev = Some(v);
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::KroneckerPenalty;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_design(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn divided_difference_examples() {
        assert_eq!(divided_difference(&[0.0, 1.0], &[3.0, 5.0]).unwrap(), 2.0);
        assert_eq!(divided_difference(&[0.3], &[7.0]).unwrap(), 7.0);
        assert!(matches!(
            divided_difference(&[0.0, 0.0], &[1.0, 2.0]),
            Err(KtfError::RepeatedPoint(_))
        ));
        let z = [0.1, 0.4, 0.5, 0.9];
        let cubic_free: Vec<f64> = z.iter().map(|x| 1.0 - 2.0 * x + 3.0 * x * x).collect();
        assert!(divided_difference(&z, &cubic_free).unwrap().abs() < 1e-12);
    }

    #[test]
    fn divided_difference_matches_scaled_forward_difference() {
        // f[z, …, z+(r−1)/n] = n^{r−1}/(r−1)! · Δ^{r−1} f(z)
        let n = 7.0;
        let f = |x: f64| (3.0 * x).sin() + x.powi(4);
        for r in 1..=5usize {
            let z: Vec<f64> = (0..r).map(|i| 0.2 + i as f64 / n).collect();
            let vals: Vec<f64> = z.iter().map(|&x| f(x)).collect();
            let mut fd = vals.clone();
            for level in 1..r {
                for i in 0..r - level {
                    fd[i] = fd[i + 1] - fd[i];
                }
            }
            let fact: f64 = (1..r).map(|v| v as f64).product();
            let expect = n.powi(r as i32 - 1) / fact * fd[0];
            let got = divided_difference(&z, &vals).unwrap();
            assert!((got - expect).abs() < 1e-9 * expect.abs().max(1.0), "r={r}");
        }
    }

    #[test]
    fn solve_appended_zeroes_the_divided_difference() {
        let t = DividedDiffTable::new(vec![0.0, 0.3, 1.0], vec![1.0, -2.0, 0.5]).unwrap();
        let x = 0.7;
        let fx = t.solve_appended(x).unwrap();
        let dd = divided_difference(&[0.0, 0.3, 1.0, x], &[1.0, -2.0, 0.5, fx]).unwrap();
        assert!(dd.abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_examples() {
        let z = uniform_design(6);
        let theta = [0.3, -1.0, 2.0, 4.5, 0.0, 1.0];
        for k in 0..=3 {
            for i in 0..6 {
                assert_eq!(interpolate_1d(&z, &theta, z[i], k).unwrap(), theta[i]);
            }
        }
        let lin: Vec<f64> = z.iter().map(|x| 2.0 - 3.0 * x).collect();
        for x in [-0.4, 0.05, 0.33, 0.71, 1.0, 1.6] {
            assert!((interpolate_1d(&z, &lin, x, 1).unwrap() - (2.0 - 3.0 * x)).abs() < 1e-12);
        }
        let mid = 0.5 * (z[2] + z[3]);
        assert!(
            (interpolate_1d(&z, &theta, mid, 1).unwrap() - 0.5 * (theta[2] + theta[3])).abs()
                < 1e-12
        );
        // k = 0 takes the right neighbor
        assert_eq!(interpolate_1d(&z, &theta, mid, 0).unwrap(), theta[3]);
        assert_eq!(interpolate_1d(&z, &theta, -3.0, 0).unwrap(), theta[0]);
        assert_eq!(interpolate_1d(&z, &theta, 9.0, 0).unwrap(), theta[5]);
    }

    #[test]
    fn locate_agrees_with_binary_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1usize, 2, 5, 40] {
            let z = uniform_design(n);
            for _ in 0..500 {
                let x = if rng.random_bool(0.3) {
                    z[rng.random_range(0..n)]
                } else {
                    rng.random_range(-0.5..1.5)
                };
                assert_eq!(locate(&z, x, true), locate(&z, x, false));
            }
        }
    }

    #[test]
    fn ffb_examples() {
        let z = uniform_design(5);
        for k in 0..3 {
            for x in [-1.0, 0.1, 0.5, 2.0] {
                assert_eq!(ffb_eval(1, x, &z, k), 1.0);
            }
            assert_eq!(ffb_eval(k + 2, z[k], &z, k), 0.0);
            assert_eq!(ffb_eval(k + 2, z[k] - 0.3, &z, k), 0.0);
        }
        let z2 = [0.5, 1.0];
        assert_eq!(ffb_eval(2, 0.4, &z2, 0), 0.0);
        assert_eq!(ffb_eval(2, 0.5, &z2, 0), 0.0);
        assert_eq!(ffb_eval(2, 0.51, &z2, 0), 1.0);
    }

    #[test]
    fn basis_solve_matches_dense_inverse() {
        for k in 0..=2 {
            for n in [k + 1, 7, 12] {
                let z = uniform_design(n);
                let h = DMatrix::from_fn(n, n, |a, b| ffb_eval(b + 1, z[a], &z, k));
                let inv = h.clone().try_inverse().unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
                let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let sig =
                    GridSignal::new(LatticeShape::uniform(&[n]).unwrap(), theta.clone()).unwrap();
                let alpha = basis_coefficients(&sig, k);
                let dense = &inv * nalgebra::DVector::from_vec(theta);
                for i in 0..n {
                    assert!((alpha[i] - dense[i]).abs() < 1e-8 * dense.amax().max(1.0));
                }
            }
        }
    }

    #[test]
    fn oracle_reproduces_lattice_and_steps() {
        let shape = LatticeShape::uniform(&[4, 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = GridSignal::new(
            shape.clone(),
            (0..20).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        for k in 0..=2 {
            for flat in 0..20 {
                let v = basis_oracle_eval(&theta, &shape.point(flat), k).unwrap();
                assert!((v - theta.values()[flat]).abs() < 1e-9);
            }
        }
        // k = 0: right-continuous step function, constant on (z_{i−1}, z_i]
        let a = basis_oracle_eval(&theta, &[0.3, 0.45], 0).unwrap();
        let b = basis_oracle_eval(&theta, &[0.49, 0.59], 0).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!((a - theta.values()[5 + 2]).abs() < 1e-12);
    }

    #[test]
    fn matches_oracle_uniform_and_uneven() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shapes = [
            LatticeShape::uniform(&[5, 5]).unwrap(),
            LatticeShape::uniform(&[4, 3, 5]).unwrap(),
            LatticeShape::with_designs(vec![
                vec![0.0, 0.1, 0.35, 0.4, 0.8, 1.0],
                vec![-1.0, 0.0, 2.5, 3.0],
            ])
            .unwrap(),
        ];
        for shape in shapes {
            let theta = GridSignal::new(
                shape.clone(),
                (0..shape.len())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            for k in 0..=2 {
                for _ in 0..60 {
                    let x: Vec<f64> = (0..shape.ndim())
                        .map(|a| {
                            let z = shape.design(a);
                            let span = z[z.len() - 1] - z[0];
                            rng.random_range(z[0] - 0.2 * span..z[z.len() - 1] + 0.2 * span)
                        })
                        .collect();
                    let fast = interpolate(&theta, &x, k).unwrap();
                    let slow = basis_oracle_eval(&theta, &x, k).unwrap();
                    assert!(
                        (fast - slow).abs() < 1e-8 * slow.abs().max(1.0),
                        "k={k} x={x:?}: {fast} vs {slow}"
                    );
                }
            }
        }
    }

    #[test]
    fn locality() {
        let shape = LatticeShape::uniform(&[6, 6]).unwrap();
        let theta = GridSignal::from_fn(shape.clone(), |x| (4.0 * x[0]).cos() * x[1]).unwrap();
        let x = [0.41, 0.77];
        for k in 0..=2 {
            let base = interpolate(&theta, &x, k).unwrap();
            for flat in 0..shape.len() {
                let mut v = theta.values().to_vec();
                v[flat] += 1.0;
                let moved = interpolate(&theta.with_values(v).unwrap(), &x, k).unwrap() != base;
                let p = shape.multi_index(flat).unwrap();
                // 0.41 ≤ z_2 = 0.5 and 0.77 ≤ z_4 = 5/6 (0-based)
                let s0 = stencil_start(2, 6, k);
                let s1 = stencil_start(4, 6, k);
                let in0 = (s0..=s0 + k).contains(&(p.0[0] - 1));
                let in1 = (s1..=s1 + k).contains(&(p.0[1] - 1));
                assert!(!moved || (in0 && in1), "k={k} site {p:?}");
            }
        }
    }

    #[test]
    fn interpolant_ktv_equals_lattice_ktv() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let shape = LatticeShape::uniform(&[5, 5]).unwrap();
        let pen = KroneckerPenalty::new(&shape, 0).unwrap();
        for _ in 0..20 {
            let theta = GridSignal::new(
                shape.clone(),
                (0..25).map(|_| rng.random_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let a = ktv_of_interpolant_k0(&theta).unwrap();
            assert!((a - pen.ktv(&theta).unwrap()).abs() < 1e-12);
        }
        let constant = GridSignal::new(shape.clone(), vec![3.0; 25]).unwrap();
        assert_eq!(ktv_of_interpolant_k0(&constant).unwrap(), 0.0);
        let mut hot = vec![0.0; 25];
        hot[12] = 1.5;
        let hot = GridSignal::new(shape, hot).unwrap();
        assert!((ktv_of_interpolant_k0(&hot).unwrap() - 4.0 * 1.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_lattice_rejected() {
        let shape = LatticeShape::uniform(&[2, 5]).unwrap();
        let theta = GridSignal::zeros(shape);
        assert!(matches!(
            interpolate(&theta, &[0.5, 0.5], 2),
            Err(KtfError::DegenerateLattice { axis: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn polynomial_reproduction(
            k in 0usize..=2,
            coef in proptest::collection::vec(-2.0f64..2.0, 27),
            q in proptest::collection::vec(-0.3f64..1.3, 3),
        ) {
            let shape = LatticeShape::uniform(&[4, 5, 4]).unwrap();
            let m = k + 1;
            let poly = |x: &[f64]| {
                let mut s = 0.0;
                for c in 0..m * m * m {
                    let (e0, e1, e2) = (c % m, c / m % m, c / (m * m));
                    s += coef[c] * x[0].powi(e0 as i32) * x[1].powi(e1 as i32) * x[2].powi(e2 as i32);
                }
                s
            };
            let theta = GridSignal::from_fn(shape, |x| poly(x)).unwrap();
            let got = interpolate(&theta, &q, k).unwrap();
            prop_assert!((got - poly(&q)).abs() < 1e-8 * poly(&q).abs().max(1.0));
        }
    }
}
