//! Signal generators, noise, tuning curves, error-rate fits and solver timing.
//!
//! Scaled generators fix their magnitude through the canonical radius
//! `C_n* = n^{1 − (k+1)/d}` and check it with `ktv` at construction.
//! Every random quantity is driven by an explicit seed, and parallel loops
//! reduce results in a fixed order, so runs are reproducible.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{KtfError, Result};
use crate::lattice::{GridSignal, LatticeShape};
use crate::penalty::KroneckerPenalty;
use crate::solvers::{
    cg_solve, ktf_admm_warm, objective, solve, AdmmConfig, AdmmState, SolveOptions, SolverKind,
};
use crate::spectral::{eigen_coefficients, gram_pinv_apply, poly_projection};

/// Canonical KTV radius `n^{1 − (k+1)/d}`.
pub fn canonical_scaling(n: usize, k: usize, d: usize) -> f64 {
    (n as f64).powf(1.0 - (k + 1) as f64 / d as f64)
}

/// Rescales `signal` so that its order-`k` KTV equals `target`.
fn scale_to_ktv(signal: GridSignal, k: usize, target: f64) -> Result<GridSignal> {
    let pen = KroneckerPenalty::new(signal.shape(), k)?;
    let tv = pen.ktv(&signal)?;
    if !(tv > 0.0) {
        return Err(KtfError::InvalidArgument(
            "signal has zero KTV and cannot be scaled".into(),
        ));
    }
    let c = target / tv;
    let scaled = signal.with_values(signal.values().iter().map(|v| v * c).collect())?;
    let check = pen.ktv(&scaled)?;
    debug_assert!((check - target).abs() <= 1e-9 * target);
    Ok(scaled)
}

/// Two Gaussian bumps in opposite corners of `[0,1]²` on a gentle background.
///
/// Amplitudes 3 at `(0.2, 0.2)` and 1 at `(0.8, 0.8)`, widths 0.08 and 0.05.
pub fn gen_two_peak(side: usize) -> Result<GridSignal> {
    let shape = LatticeShape::uniform(&[side, side])?;
    let bump = |x: &[f64], c: f64, w: f64| {
        let r2 = (x[0] - c).powi(2) + (x[1] - c).powi(2);
        (-r2 / (2.0 * w * w)).exp()
    };
    GridSignal::from_fn(shape, |x| {
        let background = 0.1 * (std::f64::consts::PI * (x[0] + x[1])).sin();
        3.0 * bump(x, 0.2, 0.08) + bump(x, 0.8, 0.05) + background
    })
}

/// A single nonzero site at the lattice center, scaled to `ktv = C_n*` for `k = 0`.
pub fn gen_one_hot(shape: &LatticeShape) -> Result<GridSignal> {
    let mut values = vec![0.0; shape.len()];
    let center: usize = shape
        .dims()
        .iter()
        .zip(shape.strides())
        .map(|(&n, &s)| (n / 2) * s)
        .sum();
    values[center] = 1.0;
    let signal = GridSignal::new(shape.clone(), values)?;
    scale_to_ktv(signal, 0, canonical_scaling(shape.len(), 0, shape.ndim()))
}

/// An `ℓ₁` tent `max(0, r − Σ_j |i_j − c_j|)` around the lattice center, scaled to
/// `ktv = C_n*` for `k = 1`. The radius is a quarter of the shortest side.
pub fn gen_spike(shape: &LatticeShape) -> Result<GridSignal> {
    let dims = shape.dims();
    let radius = (*dims.iter().min().expect("lattice has an axis") as f64 / 4.0).max(1.0);
    let mut values = Vec::with_capacity(shape.len());
    for flat in 0..shape.len() {
        let dist: f64 = dims
            .iter()
            .zip(shape.strides())
            .map(|(&n, &s)| ((flat / s % n) as f64 - (n - 1) as f64 / 2.0).abs())
            .sum();
        values.push((radius - dist).max(0.0));
    }
    let signal = GridSignal::new(shape.clone(), values)?;
    scale_to_ktv(signal, 1, canonical_scaling(shape.len(), 1, shape.ndim()))
}

/// `a · Σ_j x_j`. For `k = 0`, `a` gives `ktv = C_n*`. For `k ≥ 1` the signal is in the
/// penalty null space, so it is scaled to unit sup norm instead.
pub fn gen_linear(shape: &LatticeShape, k: usize) -> Result<GridSignal> {
    let raw = GridSignal::from_fn(shape.clone(), |x| x.iter().sum())?;
    if k == 0 {
        scale_to_ktv(raw, 0, canonical_scaling(shape.len(), 0, shape.ndim()))
    } else {
        let max = raw.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        raw.with_values(raw.values().iter().map(|v| v / max).collect())
    }
}

/// Piecewise-smooth test image in `[0, 1]`: a ramp, a disk, a square and a soft bump.
pub fn synthetic_image(side: usize) -> Result<GridSignal> {
    let shape = LatticeShape::uniform(&[side, side])?;
    GridSignal::from_fn(shape, |x| {
        let mut v = 0.15 + 0.25 * x[1];
        if (x[0] - 0.35).powi(2) + (x[1] - 0.4).powi(2) < 0.06 {
            v += 0.35;
        }
        if (0.6..0.85).contains(&x[0]) && (0.55..0.9).contains(&x[1]) {
            v = 0.9;
        }
        let r2 = (x[0] - 0.75).powi(2) + (x[1] - 0.2).powi(2);
        v += 0.25 * (-r2 / 0.01).exp();
        v.min(1.0)
    })
}

/// Noise level, given directly or through `SNR = var(signal) / σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Sigma(f64),
    Snr(f64),
}

impl Noise {
    /// Standard deviation `σ` for a given clean signal.
    pub fn sigma(self, signal: &GridSignal) -> Result<f64> {
        match self {
            Noise::Sigma(s) if s >= 0.0 && s.is_finite() => Ok(s),
            Noise::Snr(snr) if snr > 0.0 && snr.is_finite() => {
                Ok((variance(signal.values()) / snr).sqrt())
            }
            _ => Err(KtfError::InvalidArgument(format!(
                "invalid noise level {self:?}"
            ))),
        }
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Adds i.i.d. `N(0, σ²)` noise drawn from a ChaCha8 stream seeded by `seed`.
pub fn add_noise(signal: &GridSignal, noise: Noise, seed: u64) -> Result<GridSignal> {
    let sigma = noise.sigma(signal)?;
    if sigma == 0.0 {
        return Ok(signal.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| KtfError::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = signal
        .values()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    signal.with_values(values)
}

/// Mean squared error `‖a − b‖² / n`.
pub fn mse(a: &GridSignal, b: &GridSignal) -> f64 {
    let n = a.len() as f64;
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n
}

/// `‖(Dᵀ)⁺ y‖_∞`, a `λ` at and above which the solution is the polynomial projection.
///
/// The min-norm dual `(Dᵀ)⁺ y` is feasible for every such `λ`. In one dimension `D`
/// has full row rank and the bound is tight; for `d ≥ 2` it is an upper bound. Uniform lattices divide by the Gram spectrum; others run CG on `DᵀD x = y − Π y`.
/// Either way `(Dᵀ)⁺ y = D (DᵀD)⁺ y`.
pub fn lambda_max(y: &GridSignal, k: usize) -> Result<f64> {
    let pen = KroneckerPenalty::new(y.shape(), k)?;
    let x = if y.shape().is_uniform() {
        gram_pinv_apply(y, k)?.into_values()
    } else {
        let proj = poly_projection(y, k)?;
        let rhs: Vec<f64> = y
            .values()
            .iter()
            .zip(proj.values())
            .map(|(a, b)| a - b)
            .collect();
        let mut x = vec![0.0; y.len()];
        let apply = |v: &[f64], out: &mut [f64]| {
            let t = pen.apply_slice(v);
            pen.apply_transpose_into(&t, out);
        };
        cg_solve(apply, &rhs, &mut x, 1e-12, 20 * y.len() + 100);
        x
    };
    Ok(pen
        .apply_slice(&x)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// `count` geometric values spanning `[1e−3, 1] · lambda_max`, increasing.
pub fn lambda_grid(lambda_max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => (0..count)
            .map(|i| lambda_max * 10f64.powf(-3.0 + 3.0 * i as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// An estimator with one tuning parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// KTF tuned by `λ`, solved by Type I ADMM with warm starts along the grid.
    Ktf { k: usize },
    /// Eigenmaps projection tuned by the box side `τ` (`[τ]^d` retained).
    Eigenmaps { k: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ktf { .. } => "ktf",
            Method::Eigenmaps { .. } => "eigenmaps",
        }
    }
}

/// MSE statistics of one tuning value across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningCell {
    pub param: f64,
    pub mean_mse: f64,
    pub sd_mse: f64,
    /// Repetitions where the solver errored or hit its iteration cap.
    pub failures: usize,
}

/// A method's MSE over a tuning grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningCurve {
    pub method: &'static str,
    pub n: usize,
    pub cells: Vec<TuningCell>,
    /// Index of the smallest mean MSE.
    pub best: usize,
}

impl TuningCurve {
    pub fn best_cell(&self) -> &TuningCell {
        &self.cells[self.best]
    }
}

/// ADMM settings for tuning sweeps: Type I, relaxed tolerances, warm-started.
fn sweep_admm() -> AdmmConfig {
    AdmmConfig {
        eps_abs: 1e-5,
        eps_rel: 1e-5,
        max_iters: 3000,
        ..AdmmConfig::type1()
    }
}

/// Per-parameter MSEs for one noisy draw; `None` marks a failed fit.
fn rep_errors(
    truth: &GridSignal,
    y: &GridSignal,
    method: Method,
    grid: &[f64],
) -> Result<Vec<(Option<f64>, bool)>> {
    match method {
        Method::Ktf { k } => {
            // decreasing λ so each warm start comes from a smoother fit
            let mut order: Vec<usize> = (0..grid.len()).collect();
            order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
            let config = sweep_admm();
            let mut out = vec![(None, true); grid.len()];
            let mut state: Option<AdmmState> = None;
            for i in order {
                match ktf_admm_warm(y, k, grid[i], &config, state.as_ref()) {
                    Ok((fit, st)) => {
                        out[i] = (Some(mse(&fit.theta, truth)), !fit.converged);
                        state = Some(st);
                    }
                    Err(_) => out[i] = (None, true),
                }
            }
            Ok(out)
        }
        Method::Eigenmaps { k } => {
            let cy = eigen_coefficients(y, k)?;
            let c0 = eigen_coefficients(truth, k)?;
            let shape = y.shape();
            let n = shape.len() as f64;
            let dims = shape.dims();
            let strides = shape.strides();
            // the per-site box rank: a site is kept iff max_j (i_j + 1) ≤ τ
            let rank: Vec<usize> = (0..shape.len())
                .map(|f| {
                    (0..dims.len())
                        .map(|a| f / strides[a] % dims[a] + 1)
                        .max()
                        .unwrap_or(1)
                })
                .collect();
            Ok(grid
                .iter()
                .map(|&tau| {
                    let err: f64 = (0..shape.len())
                        .map(|i| {
                            let r = if (rank[i] as f64) <= tau {
                                cy.values()[i] - c0.values()[i]
                            } else {
                                c0.values()[i]
                            };
                            r * r
                        })
                        .sum();
                    (Some(err / n), false)
                })
                .collect())
        }
    }
}

/// Mean and standard deviation of the MSE at each tuning value over `seeds.len()` noisy draws.
///
/// For eigenmaps the grid holds box sides `τ` and the MSE uses orthonormality of the basis.
pub fn tuning_curve(
    truth: &GridSignal,
    method: Method,
    grid: &[f64],
    noise: Noise,
    seeds: &[u64],
) -> Result<TuningCurve> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(KtfError::InvalidArgument(
            "tuning grid and seed list must be nonempty".into(),
        ));
    }
    let per_rep: Vec<Vec<(Option<f64>, bool)>> = seeds
        .par_iter()
        .map(|&seed| {
            let y = add_noise(truth, noise, seed)?;
            rep_errors(truth, &y, method, grid)
        })
        .collect::<Result<_>>()?;
    let cells: Vec<TuningCell> = (0..grid.len())
        .map(|g| {
            let vals: Vec<f64> = per_rep.iter().filter_map(|r| r[g].0).collect();
            let failures = per_rep.iter().filter(|r| r[g].1).count();
            let (mean, sd) = mean_sd(&vals);
            TuningCell {
                param: grid[g],
                mean_mse: mean,
                sd_mse: sd,
                failures,
            }
        })
        .collect();
    let best = (0..cells.len())
        .min_by(|&a, &b| cells[a].mean_mse.total_cmp(&cells[b].mean_mse))
        .expect("grid is nonempty");
    Ok(TuningCurve {
        method: method.name(),
        n: truth.len(),
        cells,
        best,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// OLS fit of `log(mse)` on `log(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
}

/// Slope of `log(mse)` against `log(n)` with its standard error.
pub fn rate_slope(points: &[(usize, f64)]) -> Result<SlopeFit> {
    let mut distinct: Vec<usize> = points.iter().map(|p| p.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(KtfError::InvalidArgument(
            "rate fit needs at least 3 distinct n".into(),
        ));
    }
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(KtfError::InvalidArgument(
            "rate fit needs positive errors".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - my - slope * (x - mx)).powi(2))
        .sum();
    let stderr = if xs.len() > 2 {
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit { slope, stderr })
}

/// Named error-rate experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    OneHot,
    Spike,
    Linear,
    TwoPeakDemo,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::OneHot => "one-hot",
            Experiment::Spike => "spike",
            Experiment::Linear => "linear",
            Experiment::TwoPeakDemo => "two-peak-demo",
        }
    }

    /// The clean signal on a cube of side `side` in `d` dimensions.
    pub fn signal(self, side: usize, d: usize, k: usize) -> Result<GridSignal> {
        let shape = LatticeShape::uniform(&vec![side; d])?;
        match self {
            Experiment::OneHot => gen_one_hot(&shape),
            Experiment::Spike => gen_spike(&shape),
            Experiment::Linear => gen_linear(&shape, k),
            Experiment::TwoPeakDemo if d == 2 => gen_two_peak(side),
            Experiment::TwoPeakDemo => Err(KtfError::InvalidArgument(
                "two-peak-demo is two-dimensional".into(),
            )),
        }
    }

    /// Noise used by the experiment: unit variance, or SNR 0.5 for the demo.
    pub fn noise(self) -> Noise {
        match self {
            Experiment::TwoPeakDemo => Noise::Snr(0.5),
            _ => Noise::Sigma(1.0),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = KtfError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Experiment::OneHot,
            Experiment::Spike,
            Experiment::Linear,
            Experiment::TwoPeakDemo,
        ]
        .into_iter()
        .find(|e| e.name() == s)
        .ok_or_else(|| KtfError::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

/// Settings of [`run_rates`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateConfig {
    pub experiment: Experiment,
    /// Side lengths; `n = side^d`.
    pub sides: Vec<usize>,
    pub d: usize,
    pub k: usize,
    pub reps: usize,
    pub seed: u64,
    /// Number of `λ` values for KTF.
    pub grid_len: usize,
}

/// Best tuned error of one method at one `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub method: &'static str,
    pub best_param: f64,
    pub mse: f64,
    pub sd: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Rows of best mean MSE per `(n, method)`, plus the full tuning curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub curves: Vec<TuningCurve>,
}

impl RateTable {
    /// `(n, mse)` pairs of one method.
    pub fn points(&self, method: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.n, r.mse))
            .collect()
    }

    pub fn slope(&self, method: &str) -> Result<SlopeFit> {
        rate_slope(&self.points(method))
    }
}

/// Runs KTF and eigenmaps, each tuned for the smallest mean MSE, at every size.
///
/// The `λ` grid comes from [`lambda_max`] of the first noisy draw; the eigenmaps
/// grid is every box side `1..=side`. Repetition `r` uses seed `seed + r`.
pub fn run_rates(config: &RateConfig) -> Result<RateTable> {
    if config.reps == 0 || config.sides.is_empty() {
        return Err(KtfError::InvalidArgument(
            "need at least one repetition and one size".into(),
        ));
    }
    let seeds: Vec<u64> = (0..config.reps as u64)
        .map(|r| config.seed.wrapping_add(r))
        .collect();
    let noise = config.experiment.noise();
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for &side in &config.sides {
        let truth = config.experiment.signal(side, config.d, config.k)?;
        let y0 = add_noise(&truth, noise, seeds[0])?;
        let lam_grid = lambda_grid(lambda_max(&y0, config.k)?, config.grid_len);
        let tau_grid: Vec<f64> = (1..=side).map(|t| t as f64).collect();
        for (method, grid) in [
            (Method::Ktf { k: config.k }, &lam_grid),
            (Method::Eigenmaps { k: config.k }, &tau_grid),
        ] {
            let curve = tuning_curve(&truth, method, grid, noise, &seeds)?;
            let best = curve.best_cell();
            rows.push(RateRow {
                n: truth.len(),
                method: method.name(),
                best_param: best.param,
                mse: best.mean_mse,
                sd: best.sd_mse,
                reps: config.reps,
                failures: best.failures,
            });
            curves.push(curve);
        }
    }
    Ok(RateTable { rows, curves })
}

/// One traced iteration of a benchmarked solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchPoint {
    pub iter: usize,
    pub seconds: f64,
    pub objective: f64,
    /// `(f − f*) / |f*|`.
    pub rel_subopt: f64,
}

/// Objective and suboptimality of a solver over wall time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTrace {
    pub solver: String,
    pub n: usize,
    pub iters: usize,
    pub seconds: f64,
    pub converged: bool,
    pub f_star: f64,
    pub points: Vec<BenchPoint>,
}

impl BenchTrace {
    /// Wall time at which the relative suboptimality first drops to `tol`.
    pub fn time_to(&self, tol: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.rel_subopt <= tol)
            .map(|p| p.seconds)
    }

    /// Mean wall time per iteration.
    pub fn per_iter(&self) -> f64 {
        self.seconds / self.iters.max(1) as f64
    }

    /// Smallest objective seen along the trace.
    pub fn best_objective(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.objective)
            .fold(f64::INFINITY, f64::min)
    }

    /// Recomputes suboptimality against a new optimum.
    pub fn rebase(&mut self, f_star: f64) {
        let scale = f_star.abs().max(f64::MIN_POSITIVE);
        self.f_star = f_star;
        for p in &mut self.points {
            p.rel_subopt = (p.objective - f_star) / scale;
        }
    }
}

/// Runs `kind` with tracing and reports its suboptimality against `f_star`.
///
/// Solvers that record no trace contribute their final iterate as one point.
pub fn bench_solver(
    kind: SolverKind,
    y: &GridSignal,
    k: usize,
    lambda: f64,
    f_star: f64,
    opts: &SolveOptions,
) -> Result<BenchTrace> {
    let opts = SolveOptions {
        trace: true,
        ..opts.clone()
    };
    let start = Instant::now();
    let fit = solve(kind, y, k, lambda, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    let mut points: Vec<BenchPoint> = fit
        .trace
        .iter()
        .map(|t| BenchPoint {
            iter: t.iter,
            seconds: t.seconds,
            objective: t.objective,
            rel_subopt: 0.0,
        })
        .collect();
    if points.is_empty() {
        points.push(BenchPoint {
            iter: fit.iters,
            seconds,
            objective: objective(y, &fit.theta, k, lambda)?,
            rel_subopt: 0.0,
        });
    }
    let mut trace = BenchTrace {
        solver: kind.name().to_string(),
        n: y.len(),
        iters: fit.iters,
        seconds,
        converged: fit.converged,
        f_star,
        points,
    };
    trace.rebase(f_star);
    Ok(trace)
}
