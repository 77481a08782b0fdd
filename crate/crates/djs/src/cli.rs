//! Experiment orchestration behind the `djs` binary.

use std::path::PathBuf;

use djs_core::measures::{ks_distance, mp_density, mp_reference};
use djs_core::solver::{diamond_with, resolve_density_with, solve_hk, theory_spectrum_with};
use djs_core::stransform::s_transform;
use djs_core::{Complex64, SpectralMeasure};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, Format, Mode};
use crate::error::{Error, Result};
use crate::io;
use crate::parallel::Pool;
use crate::rng::{stream, Role};
use crate::simulate::{compare, pooled_eigenvalues, simulate, RunOptions};

/// What a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub files: Vec<PathBuf>,
    /// Set by `validate`.
    pub all_passed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

struct Outputs<'a> {
    spec: &'a ExperimentSpec,
    files: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn wants(&self, f: Format) -> bool {
        self.spec.formats.contains(&f)
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.spec.output_dir.join(name);
        self.files.push(p.clone());
        p
    }
}

/// Runs `spec`, writing its files under `spec.output_dir`.
pub fn run(spec: &ExperimentSpec, pool: &Pool) -> Result<RunSummary> {
    spec.validate()?;
    let mut out = Outputs {
        spec,
        files: Vec::new(),
    };
    let p = out.path("spec.json");
    io::write_json(&p, spec)?;
    let mut all_passed = None;
    match spec.mode {
        Mode::Theory => {
            let theory = theory_spectrum_with(pool, &spec.network, &spec.solver)?;
            if out.wants(Format::Csv) {
                let p = out.path("density.csv");
                io::write_density_csv(&p, &theory.density)?;
                let p = out.path("measure.csv");
                io::write_measure_csv(&p, &theory.measure)?;
            }
            if out.wants(Format::Json) {
                let p = out.path("measure.json");
                io::write_measure_json(&p, &theory.measure)?;
                let p = out.path("schedule.json");
                io::write_json(&p, &theory.schedule)?;
            }
        }
        Mode::Simulate => {
            let records = simulate(
                pool,
                &spec.network,
                spec.reps,
                RunOptions {
                    surrogate: false,
                    norms: true,
                },
            )?;
            if out.wants(Format::Csv) {
                let p = out.path("eigenvalues.csv");
                io::write_eigenvalues_csv(&p, &pooled_eigenvalues(records.iter().map(|r| &r.spectrum)))?;
            }
            if out.wants(Format::Json) {
                let p = out.path("runs.json");
                io::write_json(&p, &records)?;
            }
        }
        Mode::Compare => {
            let report = compare(pool, &spec.network, &spec.solver, spec.reps)?;
            let p = out.path("report.json");
            io::write_json(&p, &report)?;
        }
        Mode::Validate => {
            let report = validate(pool, spec)?;
            all_passed = Some(report.all_passed);
            let p = out.path("validate.json");
            io::write_json(&p, &report)?;
        }
    }
    Ok(RunSummary {
        mode: spec.mode,
        files: out.files,
        all_passed,
    })
}

fn check(name: &str, value: f64, threshold: f64) -> Check {
    Check {
        name: name.to_string(),
        passed: value < threshold,
        value,
        threshold,
    }
}

/// The built-in invariant and oracle suite.
pub fn validate(pool: &Pool, spec: &ExperimentSpec) -> Result<ValidationReport> {
    let cfg = &spec.solver;
    let d1 = SpectralMeasure::dirac(1.0)?;
    let mut checks = Vec::new();

    let grid = resolve_density_with(pool, &d1, &d1, cfg)?;
    let mp_err = (0..50)
        .map(|i| 0.2 + 3.6 * i as f64 / 49.0)
        .map(|x| (grid.density_at(x) - mp_density(1.0, x)).abs())
        .fold(0.0, f64::max);
    checks.push(check("marchenko-pastur density", mp_err, 1e-3));
    checks.push(check("density mass", (grid.mass_estimate - 1.0).abs(), 5e-3));

    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let sol = solve_hk(&d1, &d1, Complex64::new(-1.0, 0.0), cfg)?;
    checks.push(check("stieltjes at -1", (sol.f.re - golden).abs(), 1e-6));

    let mp = mp_reference(1.0)?;
    let s_err = [0.1, 0.5, 1.0]
        .iter()
        .map(|&m| s_transform(&mp, m, 1e-13).map(|s| (s - 1.0 / (1.0 + m)).abs()))
        .collect::<djs_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(check("marchenko-pastur s-transform", s_err, 1e-6));

    let mut rng = stream(spec.network.seed, 0, 0, Role::Input);
    let random_measure = |rng: &mut rand_chacha::ChaCha8Rng| {
        let atoms: Vec<(f64, f64)> = (0..4)
            .map(|_| (rng.random_range(0.1..3.0), rng.random_range(0.1..1.0)))
            .collect();
        SpectralMeasure::from_atoms(atoms)
    };
    let mut mult = 0.0f64;
    let mut commute = 0.0f64;
    for _ in 0..3 {
        let a = random_measure(&mut rng)?;
        let b = random_measure(&mut rng)?;
        let ab = diamond_with(pool, &a, &b, cfg)?;
        let ba = diamond_with(pool, &b, &a, cfg)?;
        let m1 = a.moment(1) * b.moment(1);
        mult = mult.max((ab.moment(1) - m1).abs() / m1);
        commute = commute.max(ks_distance(&ab, &ba));
    }
    checks.push(check("first-moment multiplicativity", mult, 1e-3));
    checks.push(check("composition symmetry", commute, 1e-3));

    let mut herglotz_violations = 0usize;
    for _ in 0..100 {
        let a = random_measure(&mut rng)?;
        let b = random_measure(&mut rng)?;
        let z = Complex64::new(rng.random_range(-3.0..8.0), rng.random_range(-3.0..3.0));
        if z.im == 0.0 && z.re >= 0.0 {
            continue;
        }
        let s = solve_hk(&a, &b, z, cfg)?;
        let ok = s.valid && s.h.im * z.im >= 0.0 && s.k.im * z.im <= 0.0 && s.f.im * z.im >= 0.0;
        herglotz_violations += usize::from(!ok);
    }
    checks.push(check("sign conditions", herglotz_violations as f64, 0.5));

    let theory = theory_spectrum_with(pool, &spec.network, cfg)?;
    let m1 = theory.layer_laws.iter().map(|k| k.moment(1)).product::<f64>();
    checks.push(check(
        "network first moment",
        (theory.measure.moment(1) - m1).abs() / m1.max(f64::MIN_POSITIVE),
        2e-3,
    ));

    let all_passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, all_passed })
}

/// JSON object printed on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for ErrorReport {
    fn from(e: &Error) -> Self {
        Self {
            error: e.kind().to_string(),
            message: e.to_string(),
            exit_code: e.exit_code(),
        }
    }
}

/// Parses `args`, runs, and returns the process exit code. The summary or
/// error object goes to the given writers as JSON.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match crate::config::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            let _ = write!(stdout, "{e}");
            return 0;
        }
        Err(e) => {
            let report = ErrorReport {
                error: "usage".into(),
                message: e.to_string().trim().to_string(),
                exit_code: 2,
            };
            let _ = writeln!(stderr, "{}", serde_json::to_string(&report).unwrap_or_default());
            return 2;
        }
    };
    let result = cli.to_spec().and_then(|spec| {
        let summary = run(&spec, &Pool::from_env())?;
        Ok(summary)
    });
    match result {
        Ok(summary) => {
            let _ = writeln!(stdout, "{}", serde_json::to_string(&summary).unwrap_or_default());
            match summary.all_passed {
                Some(false) => 3,
                _ => 0,
            }
        }
        Err(e) => {
            let report = ErrorReport::from(&e);
            let _ = writeln!(stderr, "{}", serde_json::to_string(&report).unwrap_or_default());
            report.exit_code
        }
    }
}
