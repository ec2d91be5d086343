//! End-to-end runs of the `ktf` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ktf::{GridSignal, LatticeShape};
use tempfile::TempDir;

fn ktf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ktf"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ktf(dir, args);
    assert!(
        out.status.success(),
        "ktf {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// Reads a 2-d CSV grid written by the CLI.
fn read_csv_grid(path: PathBuf) -> GridSignal {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .unwrap();
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    let shape = LatticeShape::uniform(&[rows.len(), rows[0].len()]).unwrap();
    GridSignal::new(shape, rows.concat()).unwrap()
}

/// `(coordinates, value)` rows of an interpolation CSV.
fn read_queries_out(path: PathBuf) -> (Vec<String>, Vec<(Vec<f64>, f64)>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| {
            let v: Vec<f64> = r.unwrap().iter().map(|f| f.parse().unwrap()).collect();
            let (x, val) = v.split_at(v.len() - 1);
            (x.to_vec(), val[0])
        })
        .collect();
    (header, rows)
}

fn sample(dir: &Path, name: &str) {
    ok(
        dir,
        &[
            "sample", "--kind", "two-peak", "--side", "16", "--sigma", "0.3", "--seed", "5",
            "--output", name,
        ],
    );
}

#[test]
fn zero_lambda_returns_the_input_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    for solver in ["admm-type1", "admm-type2", "dual-ref", "dykstra"] {
        ok(
            d,
            &[
                "fit", "--input", "y.bin", "--output", "f.bin", "--k", "1", "--lambda", "0",
                "--solver", solver, "--report", "r.json",
            ],
        );
        assert_eq!(
            std::fs::read(d.join("f.bin")).unwrap(),
            std::fs::read(d.join("y.bin")).unwrap(),
            "{solver}"
        );
    }
}

#[test]
fn admm_agrees_with_the_dual_reference() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    for k in [0, 1, 2] {
        let k = k.to_string();
        ok(
            d,
            &[
                "fit",
                "--input",
                "y.bin",
                "--output",
                "a.csv",
                "--k",
                &k,
                "--lambda",
                "0.05",
                "--tol-abs",
                "1e-9",
                "--tol-rel",
                "1e-9",
                "--max-iters",
                "100000",
                "--report",
                "a.json",
            ],
        );
        ok(
            d,
            &[
                "fit",
                "--input",
                "y.bin",
                "--output",
                "b.csv",
                "--k",
                &k,
                "--lambda",
                "0.05",
                "--solver",
                "dual-ref",
                "--tol-abs",
                "1e-10",
                "--max-iters",
                "2000000",
                "--report",
                "b.json",
            ],
        );
        let a = read_csv_grid(d.join("a.csv"));
        let b = read_csv_grid(d.join("b.csv"));
        let gap = a
            .values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(gap <= 1e-4, "k={k}: sup difference {gap}");
        let fa = read_json(d.join("a.json"))["fits"][0]["objective"]
            .as_f64()
            .unwrap();
        let fb = read_json(d.join("b.json"))["fits"][0]["objective"]
            .as_f64()
            .unwrap();
        assert!(
            (fa - fb).abs() <= 1e-6 * fb,
            "k={k}: objectives {fa} vs {fb}"
        );
    }
}

#[test]
fn report_ktv_matches_the_ktv_command() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    ok(
        d,
        &[
            "fit",
            "--input",
            "y.bin",
            "--output",
            "f.bin",
            "--k",
            "2",
            "--lambda-grid",
            "0.01:0.1:3",
            "--report",
            "r.json",
        ],
    );
    let report = read_json(d.join("r.json"));
    let fits = report["fits"].as_array().unwrap();
    assert_eq!(fits.len(), 3);
    for (i, entry) in fits.iter().enumerate() {
        let file = format!("f_{i:03}.bin");
        assert_eq!(entry["output"], file.as_str());
        let out = ok(d, &["ktv", "--input", &file, "--k", "2"]);
        let printed: f64 = String::from_utf8(out.stdout)
            .unwrap()
            .trim()
            .parse()
            .unwrap();
        assert_eq!(printed, entry["ktv"].as_f64().unwrap());
    }
}

#[test]
fn interpolation_at_lattice_points_echoes_the_fit() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    ok(
        d,
        &[
            "fit", "--input", "y.bin", "--output", "f.csv", "--k", "1", "--lambda", "0.05",
            "--report", "r.json",
        ],
    );
    let fit = read_csv_grid(d.join("f.csv"));
    for k in ["0", "1", "2"] {
        ok(
            d,
            &[
                "interpolate",
                "--input",
                "f.csv",
                "--k",
                k,
                "--refine",
                "1",
                "--output",
                "q.csv",
            ],
        );
        let (header, rows) = read_queries_out(d.join("q.csv"));
        assert_eq!(header, ["x1", "x2", "value"]);
        assert_eq!(rows.len(), fit.len());
        for ((x, v), (flat, want)) in rows.iter().zip(fit.values().iter().enumerate()) {
            assert_eq!(x, &fit.shape().point(flat));
            assert!(
                (v - want).abs() <= 1e-12 * want.abs().max(1.0),
                "k={k} at {x:?}: {v} vs {want}"
            );
        }
    }
}

#[test]
fn empty_query_file_gives_a_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    std::fs::write(d.join("empty.csv"), "# no queries\n").unwrap();
    ok(
        d,
        &[
            "interpolate",
            "--input",
            "y.bin",
            "--k",
            "1",
            "--queries",
            "empty.csv",
            "--output",
            "q.csv",
        ],
    );
    assert_eq!(
        std::fs::read_to_string(d.join("q.csv")).unwrap(),
        "x1,x2,value\n"
    );
}

#[test]
fn refined_interpolant_matches_the_basis_expansion() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    // a fixed 5 × 4 grid keeps the expected surface small enough to pin down
    let grid = "0,1,0.5,2\n1.5,-1,0,0.25\n3,2,1,0\n-0.5,0,4,1\n2,2,-2,0.75\n";
    std::fs::write(d.join("g.csv"), grid).unwrap();
    let shape = LatticeShape::uniform(&[5, 4]).unwrap();
    let values: Vec<f64> = grid
        .split(['\n', ','])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().unwrap())
        .collect();
    let theta = GridSignal::new(shape, values).unwrap();
    for k in [0usize, 1, 2] {
        ok(
            d,
            &[
                "interpolate",
                "--input",
                "g.csv",
                "--k",
                &k.to_string(),
                "--refine",
                "3",
                "--output",
                "q.csv",
            ],
        );
        let (_, rows) = read_queries_out(d.join("q.csv"));
        assert_eq!(rows.len(), 13 * 10);
        // corners of the refined lattice
        assert_eq!(rows[0].0, vec![0.2, 0.25]);
        assert_eq!(rows.last().unwrap().0, vec![1.0, 1.0]);
        for (x, v) in &rows {
            let want = ktf::interp::basis_oracle_eval(&theta, x, k).unwrap();
            assert!(
                (v - want).abs() <= 1e-9 * want.abs().max(1.0),
                "k={k} at {x:?}: {v} vs {want}"
            );
        }
    }
}

#[test]
fn rates_are_deterministic_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let args = |out: &'static str, summary: &'static str| {
        [
            "rates",
            "--experiment",
            "spike",
            "--k",
            "1",
            "--sides",
            "8,10,12",
            "--reps",
            "1",
            "--grid-len",
            "5",
            "--seed",
            "9",
            "--output",
            out,
            "--summary",
            summary,
        ]
    };
    ok(d, &args("a.csv", "a.json"));
    ok(d, &args("b.csv", "b.json"));
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );
    let a = read_json(d.join("a.json"));
    assert_eq!(a, read_json(d.join("b.json")));
    assert_eq!(a["rows"].as_array().unwrap().len(), 6);
    assert!(a["slopes"][0][1]["slope"].is_number());
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    std::fs::write(d.join("bad.bin"), b"KTFGRID\0garbage").unwrap();
    std::fs::write(d.join("bad.csv"), "1,2\n3\n").unwrap();
    std::fs::write(d.join("q.csv"), "0.5\n").unwrap();
    let code = |args: &[&str]| ktf(d, args).status.code();
    assert_eq!(code(&["ktv", "--input", "bad.bin"]), Some(2));
    assert_eq!(code(&["ktv", "--input", "bad.csv"]), Some(2));
    assert_eq!(
        code(&["fit", "--input", "y.bin", "--output", "f.bin"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "fit", "--input", "y.bin", "--output", "f.bin", "--lambda", "1", "--solver", "nope"
        ]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "interpolate",
            "--input",
            "y.bin",
            "--queries",
            "q.csv",
            "--output",
            "o.csv"
        ]),
        Some(2)
    );
    assert_eq!(code(&["ktv", "--input", "missing.bin"]), Some(1));
    // the fit is still written when the solver stops at its cap
    let capped = [
        "fit",
        "--input",
        "y.bin",
        "--output",
        "f.bin",
        "--lambda",
        "0.05",
        "--max-iters",
        "2",
        "--report",
        "r.json",
    ];
    assert_eq!(code(&capped), Some(3));
    assert!(d.join("f.bin").exists());
    assert_eq!(read_json(d.join("r.json"))["fits"][0]["converged"], false);
}

#[test]
fn report_validates_against_the_schema() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../../../docs/fit-report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    sample(d, "y.bin");
    for solver in ["admm-type1", "dual-ref", "dr"] {
        ok(
            d,
            &[
                "fit",
                "--input",
                "y.bin",
                "--output",
                "f.bin",
                "--k",
                "1",
                "--lambda-grid",
                "0:0.1:2",
                "--solver",
                solver,
                "--report",
                "r.json",
            ],
        );
        let report = read_json(d.join("r.json"));
        let errors: Vec<String> = validator
            .iter_errors(&report)
            .map(|e| e.to_string())
            .collect();
        assert!(errors.is_empty(), "{solver}: {errors:?}");
    }
    let mut broken = read_json(d.join("r.json"));
    broken["fits"][0].as_object_mut().unwrap().remove("dof");
    assert!(!validator.is_valid(&broken));
}
