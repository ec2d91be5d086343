//! Name-based solver selection shared by the experiment harness and the CLI.

use std::fmt;
use std::str::FromStr;

use crate::error::{KtfError, Result};
use crate::lattice::GridSignal;

use super::{
    douglas_rachford_with, dual_reference_with, ktf_admm, prox_dykstra_with, AdmmConfig,
    DualRefConfig, FitResult, SplittingConfig,
};

/// Every solver reachable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    AdmmType0,
    AdmmType1,
    AdmmType2,
    AdmmSoft,
    Dykstra,
    DouglasRachford,
    DualRef,
}

impl SolverKind {
    pub const ALL: [SolverKind; 7] = [
        SolverKind::AdmmType0,
        SolverKind::AdmmType1,
        SolverKind::AdmmType2,
        SolverKind::AdmmSoft,
        SolverKind::Dykstra,
        SolverKind::DouglasRachford,
        SolverKind::DualRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::AdmmType0 => "admm-type0",
            SolverKind::AdmmType1 => "admm-type1",
            SolverKind::AdmmType2 => "admm-type2",
            SolverKind::AdmmSoft => "admm-soft",
            SolverKind::Dykstra => "dykstra",
            SolverKind::DouglasRachford => "dr",
            SolverKind::DualRef => "dual-ref",
        }
    }

    /// ADMM split index for order `k`, if this is an ADMM variant.
    pub fn admm_split(self, k: usize) -> Option<usize> {
        match self {
            SolverKind::AdmmType0 => Some(0),
            SolverKind::AdmmType1 => Some(1.min(k + 1)),
            SolverKind::AdmmType2 => Some(k),
            SolverKind::AdmmSoft => Some(k + 1),
            _ => None,
        }
    }

    /// Whether the solver handles a `d`-dimensional problem.
    pub fn supports(self, d: usize) -> bool {
        self != SolverKind::DouglasRachford || d == 2
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = KtfError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| KtfError::InvalidArgument(format!("unknown solver {s:?}")))
    }
}

/// Solver-independent controls; each solver reads the fields that apply to it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub rho0: Option<f64>,
    pub adaptive_rho: bool,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Iteration cap; cycles for Dykstra, steps for Douglas–Rachford, gradient steps for the dual reference.
    pub max_iters: usize,
    /// Duality-gap target of the dual reference.
    pub gap_tol: f64,
    pub trace: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            rho0: None,
            adaptive_rho: true,
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iters: 10_000,
            gap_tol: 1e-8,
            trace: false,
        }
    }
}

/// Runs the named solver.
pub fn solve(
    kind: SolverKind,
    y: &GridSignal,
    k: usize,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<FitResult> {
    match kind.admm_split(k) {
        Some(j) => {
            let config = AdmmConfig {
                j,
                rho0: opts.rho0,
                adaptive: opts.adaptive_rho,
                max_iters: opts.max_iters,
                eps_abs: opts.eps_abs,
                eps_rel: opts.eps_rel,
                trace: opts.trace,
                ..AdmmConfig::default()
            };
            ktf_admm(y, k, lambda, &config)
        }
        None => {
            let split = SplittingConfig {
                iters: opts.max_iters,
                tol: Some(opts.eps_rel),
                inner_tol: 1e-12,
                trace: opts.trace,
            };
            match kind {
                SolverKind::Dykstra => prox_dykstra_with(y, k, lambda, &split),
                SolverKind::DouglasRachford => douglas_rachford_with(y, k, lambda, &split, None),
                _ => dual_reference_with(
                    y,
                    k,
                    lambda,
                    &DualRefConfig {
                        tol: opts.gap_tol,
                        max_iters: opts.max_iters,
                        trace: opts.trace,
                        strict: false,
                        ..DualRefConfig::default()
                    },
                ),
            }
        }
    }
}
