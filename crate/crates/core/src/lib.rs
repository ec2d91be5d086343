//! Kronecker trend filtering on Cartesian lattices.

mod banded;
pub mod dct;
pub mod dof;
mod error;
pub mod experiments;
pub mod interp;
pub mod lattice;
mod lines;
pub mod penalty;
pub mod prox;
pub mod solvers;
pub mod spectral;

pub use error::{KtfError, Result};
pub use lattice::{forward_diff, GridSignal, LatticeShape, MultiIndex};
pub use penalty::{build_diff_1d, Decomposition, Diff1d, KroneckerPenalty};
pub use prox::{soft_threshold, tf1d_pdip, tv1d_dp, TF1dProblem};
