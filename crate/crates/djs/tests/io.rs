use djs::config::ExperimentSpec;
use djs::io;
use djs::parallel::Pool;
use djs::simulate::{simulate, RunOptions, RunRecord};
use djs_core::measures::mp_reference;
use djs_core::solver::theory_spectrum;
use djs_core::{Activation, InputMode, NetworkConfig, QSchedule, SolverConfig};

#[test]
fn measures_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mp = mp_reference(0.5).unwrap();
    let csv = dir.path().join("m.csv");
    io::write_measure_csv(&csv, &mp).unwrap();
    assert_eq!(io::read_measure_csv(&csv).unwrap(), mp);
    let json = dir.path().join("m.json");
    io::write_measure_json(&json, &mp).unwrap();
    assert_eq!(io::read_measure_json(&json).unwrap(), mp);
}

#[test]
fn theory_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = NetworkConfig::square(2, 64, Activation::HardTanh, 0.05, InputMode::FixedPoint, 0);
    let theory = theory_spectrum(&config, &SolverConfig::default()).unwrap();
    let p = dir.path().join("density.csv");
    io::write_density_csv(&p, &theory.density).unwrap();
    let back = io::read_density_csv(&p).unwrap();
    assert_eq!(back.lambdas, theory.density.lambdas);
    assert_eq!(back.densities, theory.density.densities);
    let p = dir.path().join("schedule.json");
    io::write_json(&p, &theory.schedule).unwrap();
    assert_eq!(io::read_json::<QSchedule>(&p).unwrap(), theory.schedule);
}

#[test]
fn run_records_and_eigenvalues_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = NetworkConfig::square(2, 24, Activation::Tanh, 0.05, InputMode::IidUnit, 6);
    let records = simulate(
        &Pool::new(1),
        &config,
        2,
        RunOptions {
            surrogate: true,
            norms: true,
        },
    )
    .unwrap();
    let p = dir.path().join("runs.json");
    io::write_json(&p, &records).unwrap();
    assert_eq!(io::read_json::<Vec<RunRecord>>(&p).unwrap(), records);
    let p = dir.path().join("eigenvalues.csv");
    io::write_eigenvalues_csv(&p, &records[0].spectrum.eigenvalues).unwrap();
    assert_eq!(io::read_eigenvalues_csv(&p).unwrap(), records[0].spectrum.eigenvalues);
}

#[test]
fn spec_round_trips_through_json() {
    let act = Activation::ScaledShiftedTanh {
        scale: 1.2,
        slope: 0.8,
        shift: 0.3,
    };
    let mut spec = ExperimentSpec {
        reps: 7,
        network: NetworkConfig::square(3, 100, act, 0.1, InputMode::Q1Target { q1: 0.8 }, 42),
        ..ExperimentSpec::default()
    };
    spec.solver.eps_ladder = vec![0.05, 0.01];
    let text = spec.to_json().unwrap();
    assert_eq!(ExperimentSpec::from_json_str(&text, "test").unwrap(), spec);
}

#[test]
fn piecewise_linear_activation_from_knots() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("phi.json");
    io::write_text(&p, r#"{"knots": [[-1.0, -1.0], [1.0, 1.0]]}"#).unwrap();
    let act = io::read_activation(&p).unwrap();
    assert_eq!(act.phi(0.5), 0.5);
    assert_eq!(act.phi(3.0), 1.0);
    assert_eq!(act.dphi(3.0), 0.0);
}

#[test]
fn malformed_files_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    io::write_text(&p, "location,weight\n1.0,0.5\nx,0.5\n").unwrap();
    let err = io::read_measure_csv(&p).unwrap_err();
    assert!(matches!(err, djs::Error::Parse { line: 3, .. }), "{err}");
    assert_eq!(err.exit_code(), 2);
    io::write_text(&p, "wrong,header\n1.0,1.0\n").unwrap();
    assert!(io::read_measure_csv(&p).is_err());
    let err = io::read_measure_json(&dir.path().join("missing.json")).unwrap_err();
    assert!(matches!(err, djs::Error::Io { .. }));
    assert_eq!(err.exit_code(), 2);
}
