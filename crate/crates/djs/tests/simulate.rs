use djs::linalg::squared_singular_values;
use djs::parallel::Pool;
use djs::simulate::{
    compare, fluctuation_study, forward_pass, jacobian, mean_sd, run_replica, simulate, surrogate_diagonals, weights,
    RunOptions, RunRecord, Seeding,
};
use djs_core::{Activation, InputMode, NetworkConfig, QRecurrence, QSchedule, SolverConfig};

/// Hard-tanh with zero input and no bias: every pre-activation is zero, so
/// every derivative diagonal is the identity.
fn identity_diagonals(depth: usize, n: usize, seed: u64) -> NetworkConfig {
    NetworkConfig::square(
        depth,
        n,
        Activation::HardTanh,
        0.0,
        InputMode::Explicit { x0: vec![0.0; n] },
        seed,
    )
}

fn strip_time(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    for r in &mut records {
        r.wall_time = 0.0;
    }
    records
}

#[test]
fn identity_diagonals_give_unit_mean() {
    let pool = Pool::from_env();
    let config = identity_diagonals(2, 1024, 3);
    let means = pool
        .map(20, |r| {
            Ok::<f64, djs::Error>(run_replica(&config, r as u64, RunOptions::default())?.spectrum.mean())
        })
        .unwrap();
    let (mean, _) = mean_sd(&means);
    assert!((mean - 1.0).abs() < 0.05, "mean eigenvalue {mean}");
    let pass = forward_pass(&config, 0).unwrap();
    assert!(pass.derivatives.iter().flatten().all(|&d| d == 1.0));
}

#[test]
fn surrogate_matches_jacobian_when_diagonals_are_identity() {
    let config = identity_diagonals(3, 64, 5);
    let xs = weights(&config, 0);
    let pass = forward_pass(&config, 0).unwrap();
    let schedule = QSchedule {
        q: vec![0.0; 3],
        sigma_b2: 0.0,
        source_q1: 0.0,
        recurrence: QRecurrence::WithBias,
    };
    let sur = surrogate_diagonals(&config, 0, &schedule);
    assert_eq!(sur, pass.derivatives);
    let a = squared_singular_values(jacobian(&xs, &pass.derivatives).as_ref()).unwrap();
    let b = squared_singular_values(jacobian(&xs, &sur).as_ref()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn runs_are_identical_across_worker_counts() {
    let config = NetworkConfig::square(2, 48, Activation::Tanh, 0.05, InputMode::IidUnit, 21);
    let opts = RunOptions {
        surrogate: true,
        norms: true,
    };
    let one = strip_time(simulate(&Pool::new(1), &config, 6, opts).unwrap());
    let three = strip_time(simulate(&Pool::new(3), &config, 6, opts).unwrap());
    assert_eq!(one, three);
    let again = strip_time(simulate(&Pool::new(2), &config, 6, opts).unwrap());
    assert_eq!(one, again);
}

#[test]
fn eigenvalues_are_nonnegative_and_counted_by_the_smaller_side() {
    let mut config = NetworkConfig::square(2, 40, Activation::Erf, 0.1, InputMode::IidUnit, 8);
    config.widths = vec![24, 40, 32];
    let rec = run_replica(&config, 0, RunOptions::default()).unwrap();
    assert_eq!(rec.spectrum.eigenvalues.len(), 24);
    assert!(rec.spectrum.eigenvalues.iter().all(|&v| v >= 0.0));
    config.widths = vec![40, 40, 16];
    let rec = run_replica(&config, 0, RunOptions::default()).unwrap();
    assert_eq!(rec.spectrum.eigenvalues.len(), 16);
}

#[test]
fn empirical_q_stays_in_the_activation_range() {
    let config = NetworkConfig::square(4, 128, Activation::HardTanh, 0.05, InputMode::Q1Target { q1: 3.0 }, 2);
    let pass = forward_pass(&config, 0).unwrap();
    for &q in &pass.q[1..] {
        assert!(q > 0.05 && q <= 1.05 + 1e-12, "q = {q}");
    }
}

#[test]
fn frozen_seeds_and_the_whole_support_do_not_fluctuate() {
    let pool = Pool::from_env();
    let config = identity_diagonals(1, 32, 4);
    let frozen = fluctuation_study(&pool, &config, (0.5, 1.5), 5, &[32, 64], Seeding::Frozen).unwrap();
    assert!(frozen.rows.iter().all(|r| r.fourth_moment == 0.0));
    let config = NetworkConfig::square(2, 32, Activation::Tanh, 0.05, InputMode::IidUnit, 4);
    let whole = fluctuation_study(&pool, &config, (0.0, f64::INFINITY), 5, &[32, 64], Seeding::Independent).unwrap();
    assert!(whole.rows.iter().all(|r| r.fourth_moment == 0.0 && r.mean == 1.0));
}

#[test]
fn first_moment_of_a_single_tanh_layer() {
    let config = NetworkConfig::square(1, 2048, Activation::Tanh, 0.05, InputMode::FixedPoint, 13);
    let report = compare(&Pool::from_env(), &config, &SolverConfig::default(), 2).unwrap();
    let gap = report.moment_gaps[0] / report.theory_moments[0];
    assert!(gap < 0.02, "relative first-moment gap {gap}");
    assert!(report.ks < 0.05, "ks {}", report.ks);
}

#[test]
fn moderate_width_mean_tracks_theory() {
    let config = NetworkConfig::square(3, 512, Activation::Tanh, 0.05, InputMode::FixedPoint, 17);
    let report = compare(&Pool::from_env(), &config, &SolverConfig::default(), 4).unwrap();
    let rel = (report.empirical_moments[0] - report.theory_moments[0]).abs() / report.theory_moments[0];
    assert!(rel < 0.05, "relative mean gap {rel}");
    assert!(report.q_gaps.iter().all(|&g| g < 0.05));
    assert!(report.norm_mean > 1.8 && report.norm_mean < 2.2);
}
