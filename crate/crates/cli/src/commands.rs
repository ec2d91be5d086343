//! Subcommand bodies.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use ktf::experiments::{
    add_noise, bench_solver, gen_linear, gen_one_hot, gen_spike, gen_two_peak, lambda_max,
    run_rates, synthetic_image, BenchTrace, Noise, RateConfig, RateRow, SlopeFit,
};
use ktf::interp::interpolate_batch;
use ktf::solvers::{dual_reference_with, solve, DualRefConfig, SolveOptions, SolverKind};
use ktf::{GridSignal, KroneckerPenalty, LatticeShape};

use crate::gridfile::{read_grid, write_atomic, write_grid, Format, ParseError};
use crate::report::{risk_proxy, sigma_mad, FitEntry, FitReport, SCHEMA_VERSION};
use crate::{
    BenchArgs, FitArgs, InterpArgs, KtvArgs, NotConverged, RatesArgs, SampleArgs, SampleKind,
    SolverArgs,
};

fn solve_options(a: &SolverArgs) -> SolveOptions {
    SolveOptions {
        rho0: a.rho0,
        adaptive_rho: !a.no_adaptive_rho,
        eps_abs: a.tol_abs,
        eps_rel: a.tol_rel,
        max_iters: a.max_iters,
        gap_tol: a.tol_abs,
        trace: false,
    }
}

/// `out.bin` becomes `out_007.bin`.
fn indexed_path(path: &Path, i: usize) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{i:03}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{i:03}"),
    };
    path.with_file_name(name)
}

/// Writes JSON to `path`, or to stdout when absent.
fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let y = read_grid(&a.input, Format::resolve(a.format, &a.input))?;
    let out_format = Format::resolve(a.format, &a.output);
    let (lambdas, indexed) = match (a.lambda, a.lambda_grid) {
        (Some(l), _) => (vec![l], false),
        (None, Some(g)) => (g.values(), true),
        (None, None) => unreachable!("clap requires one of --lambda and --lambda-grid"),
    };
    let opts = solve_options(&a.solver);
    let pen = KroneckerPenalty::new(y.shape(), a.k)?;
    let sigma_hat = sigma_mad(&y);
    let mut fits = Vec::with_capacity(lambdas.len());
    let mut stalled = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        let start = Instant::now();
        let fit = solve(a.solver.solver, &y, a.k, lambda, &opts)
            .with_context(|| format!("solving at λ = {lambda}"))?;
        let seconds = start.elapsed().as_secs_f64();
        let path = if indexed {
            indexed_path(&a.output, i)
        } else {
            a.output.clone()
        };
        write_grid(&path, out_format, &fit.theta)?;
        let dof = ktf::dof::dof_estimate(&fit.theta, a.k, a.active_tol)?;
        if !fit.converged {
            stalled.push(lambda);
        }
        fits.push(FitEntry {
            lambda,
            output: path.display().to_string(),
            objective: fit.objective,
            iterations: fit.iters,
            converged: fit.converged,
            primal_residuals: fit.primal_residuals,
            dual_residuals: fit.dual_residuals,
            ktv: pen.ktv(&fit.theta)?,
            dof,
            risk_proxy: risk_proxy(&y, &fit.theta, sigma_hat, dof),
            seconds,
        });
    }
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        input: a.input.display().to_string(),
        dims: y.shape().dims().to_vec(),
        n: y.len(),
        k: a.k,
        solver: a.solver.solver.name().to_string(),
        sigma_hat,
        active_tol: a.active_tol,
        fits,
    };
    emit_json(&report, a.report.as_deref())?;
    if !stalled.is_empty() {
        return Err(NotConverged(format!(
            "{} stopped at its iteration cap for λ = {stalled:?}",
            a.solver.solver
        ))
        .into());
    }
    Ok(())
}

/// The design refined by `r`: `r − 1` evenly spaced points inside every gap.
fn refine_design(design: &[f64], r: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((design.len() - 1) * r + 1);
    for w in design.windows(2) {
        for j in 0..r {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / r as f64);
        }
    }
    out.extend(design.last());
    out
}

fn read_queries(path: &Path, d: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes.as_slice());
    let mut queries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ParseError(format!("{}: {e}", path.display())))?;
        if record.len() != d {
            return Err(ParseError(format!(
                "{}: query {} has {} coordinates, expected {d}",
                path.display(),
                line + 1,
                record.len()
            ))
            .into());
        }
        let q = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| ParseError(format!("{}: bad number {f:?}", path.display())))
            })
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        queries.push(q);
    }
    Ok(queries)
}

pub fn interpolate(a: &InterpArgs) -> Result<()> {
    let theta = read_grid(&a.input, Format::resolve(a.format, &a.input))?;
    let shape = theta.shape();
    let d = shape.ndim();
    let queries = match (&a.queries, a.refine) {
        (Some(path), _) => read_queries(path, d)?,
        (None, Some(r)) => {
            anyhow::ensure!(r >= 1, ParseError("--refine must be at least 1".into()));
            let designs: Vec<Vec<f64>> = (0..d)
                .map(|axis| refine_design(shape.design(axis), r))
                .collect();
            let fine = LatticeShape::with_designs(designs)?;
            (0..fine.len()).map(|flat| fine.point(flat)).collect()
        }
        (None, None) => unreachable!("clap requires one of --queries and --refine"),
    };
    let values = interpolate_batch(&theta, &queries, a.k)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.push("value".into());
    let rows = queries.iter().zip(&values).map(|(q, v)| {
        q.iter()
            .chain(std::iter::once(v))
            .map(|x| x.to_string())
            .collect()
    });
    write_atomic(&a.output, &csv_bytes(&header, rows)?)
}

#[derive(Debug, Serialize)]
struct RatesSummary<'a> {
    experiment: &'static str,
    d: usize,
    k: usize,
    reps: usize,
    seed: u64,
    rows: &'a [RateRow],
    /// Fitted `log(mse)` slope per method; absent with fewer than three sizes.
    slopes: Vec<(&'static str, Option<SlopeFit>)>,
}

pub fn rates(a: &RatesArgs, seed: u64) -> Result<()> {
    let config = RateConfig {
        experiment: a.experiment,
        sides: a.sides.clone(),
        d: a.d,
        k: a.k,
        reps: a.reps,
        seed,
        grid_len: a.grid_len,
    };
    let table = run_rates(&config)?;
    let header: Vec<String> = [
        "experiment",
        "n",
        "method",
        "param",
        "mean_mse",
        "sd_mse",
        "failures",
        "best",
    ]
    .map(String::from)
    .to_vec();
    let rows = table.curves.iter().flat_map(|c| {
        c.cells.iter().enumerate().map(move |(i, cell)| {
            vec![
                a.experiment.name().to_string(),
                c.n.to_string(),
                c.method.to_string(),
                cell.param.to_string(),
                cell.mean_mse.to_string(),
                cell.sd_mse.to_string(),
                cell.failures.to_string(),
                (i == c.best).to_string(),
            ]
        })
    });
    write_atomic(&a.output, &csv_bytes(&header, rows)?)?;
    let slopes = ["ktf", "eigenmaps"]
        .into_iter()
        .map(|m| (m, table.slope(m).ok()))
        .collect();
    let summary = RatesSummary {
        experiment: a.experiment.name(),
        d: a.d,
        k: a.k,
        reps: a.reps,
        seed,
        rows: &table.rows,
        slopes,
    };
    emit_json(&summary, a.summary.as_deref())
}

#[derive(Debug, Serialize)]
struct BenchSummaryRow {
    solver: String,
    n: usize,
    lambda: f64,
    iters: usize,
    seconds: f64,
    per_iter: f64,
    converged: bool,
    f_star: f64,
    final_rel_subopt: f64,
    time_to_1e_2: Option<f64>,
    time_to_1e_4: Option<f64>,
}

pub fn bench(a: &BenchArgs, seed: u64) -> Result<()> {
    anyhow::ensure!(
        a.lambda_frac > 0.0,
        ParseError("--lambda-frac must be positive".into())
    );
    let mut csv_rows = Vec::new();
    let mut summary = Vec::new();
    for &side in &a.sizes {
        let clean = synthetic_image(side)?;
        let y = add_noise(&clean, Noise::Sigma(a.sigma), seed)?;
        let lambda = a.lambda_frac * lambda_max(&y, a.k)?;
        let mut traces: Vec<BenchTrace> = Vec::with_capacity(a.solvers.len());
        for &kind in &a.solvers {
            let max_iters = if kind == SolverKind::DualRef {
                a.ref_iters
            } else {
                a.max_iters
            };
            let opts = SolveOptions {
                max_iters,
                gap_tol: 1e-10,
                ..SolveOptions::default()
            };
            traces.push(
                bench_solver(kind, &y, a.k, lambda, f64::NAN, &opts)
                    .with_context(|| format!("{kind} at side {side}"))?,
            );
        }
        // the optimum is the best objective seen by any run, the reference included
        let mut f_star = traces
            .iter()
            .map(BenchTrace::best_objective)
            .fold(f64::INFINITY, f64::min);
        if !a.solvers.contains(&SolverKind::DualRef) {
            let reference = dual_reference_with(
                &y,
                a.k,
                lambda,
                &DualRefConfig {
                    tol: 1e-10,
                    max_iters: a.ref_iters,
                    strict: false,
                    ..DualRefConfig::default()
                },
            )?;
            f_star = f_star.min(reference.objective);
        }
        for t in &mut traces {
            t.rebase(f_star);
            for p in &t.points {
                csv_rows.push(vec![
                    t.solver.clone(),
                    t.n.to_string(),
                    p.iter.to_string(),
                    p.seconds.to_string(),
                    p.objective.to_string(),
                    p.rel_subopt.to_string(),
                ]);
            }
            summary.push(BenchSummaryRow {
                solver: t.solver.clone(),
                n: t.n,
                lambda,
                iters: t.iters,
                seconds: t.seconds,
                per_iter: t.per_iter(),
                converged: t.converged,
                f_star,
                final_rel_subopt: t.points.last().map_or(f64::NAN, |p| p.rel_subopt),
                time_to_1e_2: t.time_to(1e-2),
                time_to_1e_4: t.time_to(1e-4),
            });
        }
    }
    let header: Vec<String> = ["solver", "n", "iter", "seconds", "objective", "rel_subopt"]
        .map(String::from)
        .to_vec();
    write_atomic(&a.output, &csv_bytes(&header, csv_rows)?)?;
    emit_json(&summary, a.summary.as_deref())
}

pub fn ktv(a: &KtvArgs) -> Result<()> {
    let y = read_grid(&a.input, Format::resolve(a.format, &a.input))?;
    let value = KroneckerPenalty::new(y.shape(), a.k)?.ktv(&y)?;
    println!("{value}");
    Ok(())
}

pub fn sample(a: &SampleArgs, seed: u64) -> Result<()> {
    let cube = || LatticeShape::uniform(&vec![a.side; a.d]);
    let clean: GridSignal = match a.kind {
        SampleKind::Synthetic => synthetic_image(a.side)?,
        SampleKind::TwoPeak => gen_two_peak(a.side)?,
        SampleKind::OneHot => gen_one_hot(&cube()?)?,
        SampleKind::Spike => gen_spike(&cube()?)?,
        SampleKind::Linear => gen_linear(&cube()?, a.k)?,
    };
    let y = add_noise(&clean, Noise::Sigma(a.sigma), seed)?;
    write_grid(&a.output, Format::resolve(a.format, &a.output), &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexed_paths() {
        assert_eq!(
            indexed_path(Path::new("dir/out.bin"), 7),
            Path::new("dir/out_007.bin")
        );
        assert_eq!(indexed_path(Path::new("fit"), 12), Path::new("fit_012"));
    }

    #[test]
    fn refined_design_keeps_the_original_points() {
        let d = [0.25, 0.5, 1.0];
        let r = refine_design(&d, 2);
        assert_eq!(r, vec![0.25, 0.375, 0.5, 0.75, 1.0]);
        assert_eq!(refine_design(&d, 1), d.to_vec());
    }
}
