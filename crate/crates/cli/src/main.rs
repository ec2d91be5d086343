//! `ktf`: Kronecker trend filtering from the command line.
//!
//! Exit codes: 0 success, 2 unparsable input or arguments, 3 solver did not
//! converge (outputs are still written), 1 anything else.

mod commands;
mod gridfile;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ktf::experiments::Experiment;
use ktf::solvers::SolverKind;

use crate::gridfile::{Format, ParseError};

#[derive(Debug, Parser)]
#[command(name = "ktf", version, about = "Kronecker trend filtering on lattices")]
struct Cli {
    /// Worker threads for parallel kernels; defaults to all cores.
    #[arg(long, global = true, env = "KTF_THREADS")]
    threads: Option<usize>,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit KTF to a grid for one λ or a grid of λ values.
    Fit(FitArgs),
    /// Evaluate the discrete-spline interpolant of a fit at query points.
    Interpolate(InterpArgs),
    /// Error-rate experiment comparing KTF with eigenmaps.
    Rates(RatesArgs),
    /// Solver timing and suboptimality traces.
    Bench(BenchArgs),
    /// Kronecker total variation of a grid.
    Ktv(KtvArgs),
    /// Write a synthetic test grid.
    Sample(SampleArgs),
}

/// A `min:max:count` λ grid, log-spaced when `min > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let step = 1.0 / (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 * step;
                if self.min > 0.0 {
                    (self.min.ln() + t * (self.max.ln() - self.min.ln())).exp()
                } else {
                    self.min + t * (self.max - self.min)
                }
            })
            .collect()
    }
}

fn parse_lambda_grid(s: &str) -> Result<LambdaGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err("expected min:max:count".into());
    };
    let min: f64 = lo.parse().map_err(|_| format!("bad min {lo:?}"))?;
    let max: f64 = hi.parse().map_err(|_| format!("bad max {hi:?}"))?;
    let count: usize = count.parse().map_err(|_| format!("bad count {count:?}"))?;
    if !(min >= 0.0) || !(max >= min) || count == 0 {
        return Err("need 0 ≤ min ≤ max and count ≥ 1".into());
    }
    Ok(LambdaGrid { min, max, count })
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: ktf::KtfError| e.to_string())
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: ktf::KtfError| e.to_string())
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value = "admm-type1", value_parser = parse_solver)]
    solver: SolverKind,
    /// Initial ADMM penalty parameter; defaults to λ.
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    no_adaptive_rho: bool,
    /// Absolute stopping tolerance; the duality-gap target for dual-ref.
    #[arg(long, default_value_t = 1e-6)]
    tol_abs: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol_rel: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output grid; with --lambda-grid, `_NNN` is appended to the file stem.
    #[arg(long)]
    output: PathBuf,
    /// Grid format of input and output; inferred from extensions otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(
        long,
        conflicts_with = "lambda_grid",
        required_unless_present = "lambda_grid"
    )]
    lambda: Option<f64>,
    #[arg(long, value_parser = parse_lambda_grid)]
    lambda_grid: Option<LambdaGrid>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Relative threshold for active penalty rows in the degrees of freedom.
    #[arg(long, default_value_t = 1e-6)]
    active_tol: f64,
    /// JSON report path; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InterpArgs {
    /// Fitted grid.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// CSV of query points, one per line with d coordinates.
    #[arg(long, conflicts_with = "refine", required_unless_present = "refine")]
    queries: Option<PathBuf>,
    /// Query a lattice with `r − 1` extra points between neighbors on every axis.
    #[arg(long)]
    refine: Option<usize>,
    /// Output CSV with header `x1,…,xd,value`.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct RatesArgs {
    #[arg(long, value_parser = parse_experiment)]
    experiment: Experiment,
    /// Side lengths; the lattice has `side^d` points.
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    sides: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Number of λ values tried for KTF.
    #[arg(long, default_value_t = 30)]
    grid_len: usize,
    /// Long-format CSV of every tuning cell.
    #[arg(long)]
    output: PathBuf,
    /// Slope summary JSON; printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_solver,
          default_value = "admm-type1,admm-type2,dual-ref")]
    solvers: Vec<SolverKind>,
    /// Side lengths of the square test images.
    #[arg(long, value_delimiter = ',', default_value = "64,128")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// λ as a fraction of the smallest λ that gives a polynomial fit.
    #[arg(long, default_value_t = 0.01)]
    lambda_frac: f64,
    /// Noise standard deviation added to the test image.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Iteration cap of the ADMM and splitting solvers.
    #[arg(long, default_value_t = 300)]
    max_iters: usize,
    /// Iteration cap of the dual reference, both as a contender and for the optimum.
    #[arg(long, default_value_t = 20_000)]
    ref_iters: usize,
    /// Long-format CSV of `(solver, n, iteration, seconds, suboptimality)`.
    #[arg(long)]
    output: PathBuf,
    /// Summary JSON; printed to stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KtvArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long, default_value_t = 1)]
    k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum SampleKind {
    /// Smooth bumps, a ramp and a sharp-edged disc on the unit square.
    Synthetic,
    /// The two-peak demonstration surface.
    TwoPeak,
    OneHot,
    Spike,
    Linear,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[arg(long, value_enum, default_value = "synthetic")]
    kind: SampleKind,
    #[arg(long, default_value_t = 16)]
    side: usize,
    /// Dimension for one-hot, spike and linear samples.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Order used by the linear sample.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Gaussian noise standard deviation; 0 writes the clean signal.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

/// Raised when a solver stops at its iteration cap.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct NotConverged(pub String);

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n > 0, ParseError("--threads must be positive".into()));
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Interpolate(a) => commands::interpolate(&a),
        Command::Rates(a) => commands::rates(&a, cli.seed),
        Command::Bench(a) => commands::bench(&a, cli.seed),
        Command::Ktv(a) => commands::ktv(&a),
        Command::Sample(a) => commands::sample(&a, cli.seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NotConverged>().is_some() {
                ExitCode::from(3)
            } else if e.chain().any(|c| c.is::<ParseError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_parsing() {
        let g = parse_lambda_grid("0.1:10:3").unwrap();
        let v = g.values();
        assert_eq!(v.len(), 3);
        assert!(
            (v[0] - 0.1).abs() < 1e-15 && (v[1] - 1.0).abs() < 1e-12 && (v[2] - 10.0).abs() < 1e-12
        );
        assert_eq!(
            parse_lambda_grid("0:2:3").unwrap().values(),
            vec![0.0, 1.0, 2.0]
        );
        assert_eq!(parse_lambda_grid("5:5:1").unwrap().values(), vec![5.0]);
        for bad in ["1:2", "2:1:3", "-1:1:2", "0:1:0", "a:1:2"] {
            assert!(parse_lambda_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
