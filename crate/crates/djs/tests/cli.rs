use std::path::Path;
use std::process::Command;

use djs::cli::{main_with_args, ErrorReport, RunSummary, ValidationReport};
use djs::io;
use djs::simulate::ComparisonReport;
use serde_json::Value;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run(args: &[&str]) -> Outcome {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with_args(std::iter::once("djs").chain(args.iter().copied()), &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn error_of(o: &Outcome) -> ErrorReport {
    serde_json::from_str(o.stderr.trim())
        .unwrap_or_else(|e| panic!("stderr is not an error object ({e}): {}", o.stderr))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn theory_writes_a_normalized_density() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "theory",
        "--phi",
        "hard-tanh",
        "--L",
        "2",
        "--q1",
        "fixed-point",
        "--sigma-b2",
        "0.05",
        "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let summary: RunSummary = serde_json::from_str(o.stdout.trim()).unwrap();
    assert_eq!(summary.files.len(), 5);

    let grid = io::read_density_csv(&dir.path().join("density.csv")).unwrap();
    let measure = io::read_measure_json(&dir.path().join("measure.json")).unwrap();
    let mass = grid.mass_estimate + measure.mass_at_zero();
    assert!((mass - 1.0).abs() < 5e-3, "mass {mass}");
    assert_eq!(io::read_measure_csv(&dir.path().join("measure.csv")).unwrap(), measure);

    let spec = djs::config::ExperimentSpec::from_file(&dir.path().join("spec.json")).unwrap();
    assert_eq!(spec.network.depth(), 2);
    let schedule: Value = io::read_json(&dir.path().join("schedule.json")).unwrap();
    assert_eq!(schedule["q"].as_array().unwrap().len(), 2);
}

#[test]
fn formats_restrict_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--mode",
        "theory",
        "--L",
        "1",
        "--formats",
        "json",
        "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(dir.path().join("measure.json").exists());
    assert!(!dir.path().join("density.csv").exists());
}

#[test]
fn compare_reaches_the_limit_law() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "compare",
        "--phi",
        "tanh",
        "--L",
        "3",
        "--n",
        "1024",
        "--reps",
        "20",
        "--seed",
        "7",
        "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let report: ComparisonReport = io::read_json(&dir.path().join("report.json")).unwrap();
    assert!(report.ks < 0.05, "ks {}", report.ks);
    assert_eq!(report.reps, 20);
}

#[test]
fn simulate_writes_replayable_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--phi",
        "erf",
        "--widths",
        "20,30,25",
        "--reps",
        "3",
        "--seed",
        "9",
        "--output",
        path_str(dir.path()),
    ]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let evals = io::read_eigenvalues_csv(&dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(evals.len(), 60);
    let records: Vec<djs::simulate::RunRecord> = io::read_json(&dir.path().join("runs.json")).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0].config.seed, 9);
    assert_eq!(records[0].norm_stat.len(), 2);
}

#[test]
fn validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", "--output", path_str(dir.path())]);
    assert_eq!(o.code, 0, "{}{}", o.stdout, o.stderr);
    let report: ValidationReport = io::read_json(&dir.path().join("validate.json")).unwrap();
    assert!(report.all_passed);
    let mp = report
        .checks
        .iter()
        .find(|c| c.name == "marchenko-pastur density")
        .unwrap();
    assert!(mp.value < 1e-3);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = path_str(&out);

    let o = run(&["theory", "--config", "/nonexistent/spec.json", "--output", out]);
    assert_eq!(o.code, 2);
    assert_eq!(error_of(&o).exit_code, 2);

    let o = run(&["theory", "--L", "0", "--output", out]);
    assert_eq!(o.code, 2);

    let cfg = dir.path().join("spec.json");
    io::write_text(&cfg, r#"{"mode": "theory", "network": {"widht": [4, 4]}}"#).unwrap();
    let o = run(&["--config", path_str(&cfg), "--output", out]);
    assert_eq!(o.code, 2);
    let e = error_of(&o);
    assert!(
        e.message.contains("network.widht") && e.message.contains("network.widths"),
        "{}",
        e.message
    );

    let o = run(&["theory", "--phi", "relu", "--output", out]);
    assert_eq!(o.code, 2);
    let o = run(&["theory", "--phi", "softsign", "--output", out]);
    assert_eq!(o.code, 2);
    let o = run(&["theory", "--eps-ladder", "0.01,0.1", "--output", out]);
    assert_eq!(o.code, 2);
    let o = run(&["theory", "--bogus"]);
    assert_eq!(o.code, 2);
    assert_eq!(error_of(&o).error, "usage");
}

#[test]
fn numerical_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["theory", "--tol", "1e-300", "--output", path_str(dir.path())]);
    assert_eq!(o.code, 3, "{}", o.stderr);
    let e = error_of(&o);
    assert_eq!(e.exit_code, 3);
    assert!(!e.message.is_empty());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spec.json");
    io::write_text(
        &cfg,
        r#"{"mode": "simulate", "reps": 2, "network": {"widths": [8, 8], "seed": 1}}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = run(&["--config", path_str(&cfg), "--seed", "5", "--output", path_str(&out)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let spec = djs::config::ExperimentSpec::from_file(&out.join("spec.json")).unwrap();
    assert_eq!(spec.network.seed, 5);
    assert_eq!(spec.reps, 2);
    assert_eq!(spec.network.widths, vec![8, 8]);
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_djs");
    let status = Command::new(bin).arg("--help").output().unwrap().status;
    assert_eq!(status.code(), Some(0));
    let out = Command::new(bin)
        .args(["theory", "--config", "/nonexistent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let e: ErrorReport = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(e.exit_code, 2);
}
