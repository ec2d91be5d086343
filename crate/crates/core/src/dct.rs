//! Separable DCT-II transforms and the spectral solves they diagonalize.
//!
//! The DCT-II basis diagonalizes the first-difference Laplacian `D1ᵀ D1` of a
//! path with eigenvalues `4 sin²(π i / (2N))`, `i = 0..N`. On a lattice the
//! Laplacian `Σ_j I ⊗ ... ⊗ D1ᵀD1 ⊗ ... ⊗ I` has Kronecker-sum eigenvalues.

use std::sync::Arc;

use rayon::prelude::*;
use rustdct::{DctPlanner, TransformType2And3};

use crate::lines;

/// Eigenvalues of the path Laplacian `D1ᵀ D1` on `n` points, in DCT-II order.
pub fn path_laplacian_eigs(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let s = (std::f64::consts::PI * i as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s
        })
        .collect()
}

/// Planned separable DCT over a fixed tensor shape.
pub struct SeparableDct {
    dims: Vec<usize>,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
    eigs: Vec<Vec<f64>>,
}

impl std::fmt::Debug for SeparableDct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SeparableDct")
            .field("dims", &self.dims)
            .finish()
    }
}

impl SeparableDct {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = DctPlanner::new();
        let plans = dims.iter().map(|&n| planner.plan_dct2(n)).collect();
        let eigs = dims.iter().map(|&n| path_laplacian_eigs(n)).collect();
        Self {
            dims: dims.to_vec(),
            plans,
            eigs,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Unnormalized DCT-II along every axis.
    pub fn forward(&self, x: &mut [f64]) {
        for (axis, plan) in self.plans.iter().enumerate() {
            let plan = plan.clone();
            lines::for_each_line_mut(&self.dims, axis, x, move |line| plan.process_dct2(line));
        }
    }

    /// Inverse of [`forward`](Self::forward).
    pub fn inverse(&self, x: &mut [f64]) {
        for (axis, plan) in self.plans.iter().enumerate() {
            let plan = plan.clone();
            let scale = 2.0 / self.dims[axis] as f64;
            lines::for_each_line_mut(&self.dims, axis, x, move |line| {
                plan.process_dct3(line);
                line.iter_mut().for_each(|v| *v *= scale);
            });
        }
    }

    /// Multiplies every DCT coefficient by `g(μ)`, with `μ` the Laplacian eigenvalue of that mode.
    pub fn filter<G>(&self, x: &mut [f64], g: G)
    where
        G: Fn(f64) -> f64 + Sync,
    {
        self.forward(x);
        let d = self.dims.len();
        let strides: Vec<usize> = (0..d)
            .map(|a| self.dims[a + 1..].iter().product())
            .collect();
        x.par_iter_mut()
            .enumerate()
            .with_min_len(4096)
            .for_each(|(flat, v)| {
                let mu: f64 = (0..d)
                    .map(|a| self.eigs[a][(flat / strides[a]) % self.dims[a]])
                    .sum();
                *v *= g(mu);
            });
        self.inverse(x);
    }

    /// Solves `(c I + ρ L) x = b` in place, `L` the lattice Laplacian.
    pub fn solve_shifted_laplacian(&self, x: &mut [f64], c: f64, rho: f64) {
        self.filter(x, |mu| 1.0 / (c + rho * mu));
    }
}
