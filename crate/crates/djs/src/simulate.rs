//! Finite-width Monte Carlo of network Jacobians.
//!
//! A replica draws `X^l`, `b^l` and the input from streams keyed by
//! `(seed, replica, layer, role)`, runs the forward recursion
//! `y^l = n_{l-1}^{-1/2} X^l x^{l-1} + b^l`, `x^l = phi(y^l)`, and accumulates
//! `J = prod_l n_{l-1}^{-1/2} D^l X^l` with `D^l = diag(phi'(y^l))`. The
//! surrogate replaces `D^l` by `diag |phi'(sqrt(q^l) gamma)|` with fresh
//! Gaussians `gamma` and the deterministic schedule `q^l`, keeping the same
//! weights.

use std::time::Instant;

use djs_core::activations::q_schedule;
use djs_core::measures::{ks_distance, ncm_from_eigenvalues};
use djs_core::solver::theory_spectrum_with;
use djs_core::{EmpiricalSpectrum, InputMode, NetworkConfig, QSchedule, SolverConfig};
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, squared_singular_values, top_singular_value, LANCZOS_STEPS};
use crate::parallel::Pool;
use crate::rng::{gaussians, stream, Role};

/// Which diagonal enters the Jacobian product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Diagonal {
    /// `phi'(y^l)` from the forward pass.
    Dependent,
    /// `|phi'(sqrt(q^l) gamma)|` with `gamma` independent of the weights.
    Surrogate,
}

/// Weights `X^l` (`n_l x n_{l-1}`) of one replica, `l = 1..L`.
pub fn weights(config: &NetworkConfig, replica: u64) -> Vec<Mat<f64>> {
    (1..=config.depth())
        .map(|l| {
            let mut rng = stream(config.seed, replica, l, Role::Weights);
            gaussian_matrix(config.widths[l], config.widths[l - 1], &mut rng)
        })
        .collect()
}

/// The input `x^0` of one replica.
pub fn input(config: &NetworkConfig, replica: u64) -> Result<Vec<f64>> {
    let n0 = config.widths[0];
    match &config.input {
        InputMode::Explicit { x0 } => Ok(x0.clone()),
        InputMode::IidUnit => Ok(gaussians(&mut stream(config.seed, replica, 0, Role::Input), n0)),
        InputMode::Q1Target { .. } | InputMode::FixedPoint => {
            let q1 = config.q1()?;
            Ok(vec![(q1 - config.sigma_b2).max(0.0).sqrt(); n0])
        }
    }
}

/// Everything a forward pass produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardPass {
    /// `x^0, ..., x^L`.
    pub activations: Vec<Vec<f64>>,
    /// Diagonals of `D^1, ..., D^L`.
    pub derivatives: Vec<Vec<f64>>,
    /// Empirical `q_n^l = n_{l-1}^{-1} |x^{l-1}|^2 + sigma_b^2`, `l = 1..L`
    /// (without the bias term under the bias-free recurrence for `l > 1`).
    pub q: Vec<f64>,
}

pub fn forward_pass(config: &NetworkConfig, replica: u64) -> Result<ForwardPass> {
    config.validate()?;
    forward_with(config, replica, &weights(config, replica))
}

fn forward_with(config: &NetworkConfig, replica: u64, xs: &[Mat<f64>]) -> Result<ForwardPass> {
    let act = &config.activation;
    let sigma_b = config.sigma_b2.sqrt();
    let mut x = input(config, replica)?;
    let mut activations = Vec::with_capacity(xs.len() + 1);
    let mut derivatives = Vec::with_capacity(xs.len());
    let mut q = Vec::with_capacity(xs.len());
    for (i, w) in xs.iter().enumerate() {
        let l = i + 1;
        let n_prev = x.len() as f64;
        let offset = if l == 1 {
            config.sigma_b2
        } else {
            config.recurrence.offset(config.sigma_b2)
        };
        q.push(x.iter().map(|v| v * v).sum::<f64>() / n_prev + offset);
        let col = Mat::<f64>::from_fn(x.len(), 1, |r, _| x[r]);
        let prod = w * &col;
        let bias = gaussians(&mut stream(config.seed, replica, l, Role::Bias), w.nrows());
        let scale = 1.0 / n_prev.sqrt();
        let mut next = Vec::with_capacity(w.nrows());
        let mut d = Vec::with_capacity(w.nrows());
        for r in 0..w.nrows() {
            let y = prod[(r, 0)] * scale + sigma_b * bias[r];
            let (p, dp) = (act.phi(y), act.dphi(y));
            if !p.is_finite() || !dp.is_finite() {
                return Err(Error::NonFiniteActivation {
                    layer: l,
                    seed: config.seed,
                });
            }
            next.push(p);
            d.push(dp);
        }
        activations.push(std::mem::replace(&mut x, next));
        derivatives.push(d);
    }
    activations.push(x);
    Ok(ForwardPass {
        activations,
        derivatives,
        q,
    })
}

/// The schedule `q^1..q^L` the surrogate diagonals are drawn with.
pub fn theory_schedule(config: &NetworkConfig) -> Result<QSchedule> {
    Ok(q_schedule(
        config.q1()?,
        config.depth(),
        &config.activation,
        config.sigma_b2,
        config.recurrence,
    )?)
}

/// Surrogate diagonals `|phi'(sqrt(q^l) gamma_j)|`.
pub fn surrogate_diagonals(config: &NetworkConfig, replica: u64, schedule: &QSchedule) -> Vec<Vec<f64>> {
    schedule
        .q
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let l = i + 1;
            let gamma = gaussians(&mut stream(config.seed, replica, l, Role::Gamma), config.widths[l]);
            let sq = q.sqrt();
            gamma.iter().map(|g| config.activation.dphi(sq * g).abs()).collect()
        })
        .collect()
}

/// `J = prod_{l=L..1} n_{l-1}^{-1/2} D^l X^l`, an `n_L x n_0` matrix.
pub fn jacobian(xs: &[Mat<f64>], diagonals: &[Vec<f64>]) -> Mat<f64> {
    let mut j: Option<Mat<f64>> = None;
    for (w, d) in xs.iter().zip(diagonals) {
        let scale = 1.0 / (w.ncols() as f64).sqrt();
        let layer = Mat::<f64>::from_fn(w.nrows(), w.ncols(), |r, c| w[(r, c)] * d[r] * scale);
        j = Some(match j {
            None => layer,
            Some(prev) => &layer * &prev,
        });
    }
    j.expect("depth is at least 1")
}

fn spectrum_of(j: &Mat<f64>, config: &NetworkConfig, replica: u64, label: &str) -> Result<EmpiricalSpectrum> {
    let evals = squared_singular_values(j.as_ref()).map_err(|reason| Error::Linalg {
        operation: "singular values of the Jacobian",
        layer: config.depth(),
        seed: config.seed,
        reason,
    })?;
    // Singular values below the usual numerical-rank tolerance are zeros of
    // a rank-deficient product, e.g. from vanishing derivatives.
    let top = evals.last().copied().unwrap_or(0.0);
    let cutoff = top * (j.nrows().max(j.ncols()) as f64 * f64::EPSILON).powi(2);
    let evals = evals.into_iter().map(|v| if v <= cutoff { 0.0 } else { v }).collect();
    Ok(EmpiricalSpectrum::new(
        evals,
        config.seed,
        format!("{label} replica {replica}"),
    )?)
}

/// Eigenvalues of `J J^T` for one replica, from the singular values of `J`;
/// `min(n_0, n_L)` values.
pub fn jacobian_spectrum(config: &NetworkConfig, replica: u64) -> Result<EmpiricalSpectrum> {
    Ok(run_replica(config, replica, RunOptions::default())?.spectrum)
}

/// As [`jacobian_spectrum`] with the surrogate diagonals and the same weights.
pub fn surrogate_spectrum(config: &NetworkConfig, replica: u64) -> Result<EmpiricalSpectrum> {
    config.validate()?;
    let schedule = theory_schedule(config)?;
    let xs = weights(config, replica);
    let j = jacobian(&xs, &surrogate_diagonals(config, replica, &schedule));
    spectrum_of(&j, config, replica, "surrogate")
}

/// Largest singular value of `n^{-1/2} X` for a square Gaussian `X`.
pub fn norm_check(n: usize, seed: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Config(format!("norm check needs n >= 2, got {n}")));
    }
    let x = gaussian_matrix(n, n, &mut stream(seed, 0, 0, Role::Weights));
    let top = top_singular_value(x.as_ref(), LANCZOS_STEPS).map_err(|reason| Error::Linalg {
        operation: "largest singular value",
        layer: 0,
        seed,
        reason,
    })?;
    Ok(top / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunOptions {
    /// Also compute the surrogate spectrum on the same weights.
    pub surrogate: bool,
    /// Record `n_{l-1}^{-1/2} |X^l|` per layer.
    pub norms: bool,
}

/// One simulated replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: NetworkConfig,
    pub replica: u64,
    pub per_layer_q: Vec<f64>,
    pub spectrum: EmpiricalSpectrum,
    pub surrogate_spectrum: Option<EmpiricalSpectrum>,
    /// Empty unless requested.
    pub norm_stat: Vec<f64>,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

pub fn run_replica(config: &NetworkConfig, replica: u64, opts: RunOptions) -> Result<RunRecord> {
    config.validate()?;
    let start = Instant::now();
    let xs = weights(config, replica);
    let pass = forward_with(config, replica, &xs)?;
    let spectrum = spectrum_of(&jacobian(&xs, &pass.derivatives), config, replica, "jacobian")?;
    let surrogate_spectrum = if opts.surrogate {
        let schedule = theory_schedule(config)?;
        let j = jacobian(&xs, &surrogate_diagonals(config, replica, &schedule));
        Some(spectrum_of(&j, config, replica, "surrogate")?)
    } else {
        None
    };
    let mut norm_stat = Vec::new();
    if opts.norms {
        for (i, w) in xs.iter().enumerate() {
            let top = top_singular_value(w.as_ref(), LANCZOS_STEPS).map_err(|reason| Error::Linalg {
                operation: "largest singular value",
                layer: i + 1,
                seed: config.seed,
                reason,
            })?;
            norm_stat.push(top / (w.ncols() as f64).sqrt());
        }
    }
    Ok(RunRecord {
        config: config.clone(),
        replica,
        per_layer_q: pass.q,
        spectrum,
        surrogate_spectrum,
        norm_stat,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Replicas `0..reps`, run concurrently and returned in replica order.
pub fn simulate(pool: &Pool, config: &NetworkConfig, reps: usize, opts: RunOptions) -> Result<Vec<RunRecord>> {
    config.validate()?;
    pool.map(reps, |r| run_replica(config, r as u64, opts))
}

/// Sorted concatenation of the spectra of several replicas.
pub fn pooled_eigenvalues<'a>(spectra: impl IntoIterator<Item = &'a EmpiricalSpectrum>) -> Vec<f64> {
    let mut all: Vec<f64> = spectra
        .into_iter()
        .flat_map(|s| s.eigenvalues.iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    all
}

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Theory against pooled simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: NetworkConfig,
    pub reps: usize,
    /// Kolmogorov-Smirnov distance between the pooled empirical law and the
    /// limiting law.
    pub ks: f64,
    /// Moments 1-4 of the pooled empirical law.
    pub empirical_moments: Vec<f64>,
    pub theory_moments: Vec<f64>,
    /// `|empirical - theory| / theory`, moments 1-4.
    pub moment_gaps: Vec<f64>,
    pub theory_q: Vec<f64>,
    /// Mean over replicas of the empirical `q_n^l`.
    pub empirical_q: Vec<f64>,
    /// Largest `|q_n^l - q^l|` over replicas, per layer.
    pub q_gaps: Vec<f64>,
    pub norm_mean: f64,
    pub norm_sd: f64,
    /// Set when the limit is extrapolated beyond the equal-width theorem.
    pub extrapolated: bool,
    pub wall_time: f64,
}

/// Pools `reps` replicas and compares them with the limiting law. When
/// `n_0 < n_L` the `n_L - n_0` structural zero eigenvalues of `J J^T` are
/// added so that both sides count `n_L` eigenvalues.
pub fn compare(pool: &Pool, config: &NetworkConfig, cfg: &SolverConfig, reps: usize) -> Result<ComparisonReport> {
    if reps == 0 {
        return Err(Error::Config("compare needs at least one replica".into()));
    }
    let start = Instant::now();
    let theory = theory_spectrum_with(pool, config, cfg)?;
    let records = simulate(
        pool,
        config,
        reps,
        RunOptions {
            surrogate: false,
            norms: true,
        },
    )?;
    let (n0, nl) = (config.widths[0], config.widths[config.depth()]);
    let mut evals = pooled_eigenvalues(records.iter().map(|r| &r.spectrum));
    if n0 < nl {
        evals.extend(std::iter::repeat_n(0.0, (nl - n0) * reps));
        evals.sort_by(f64::total_cmp);
    }
    let empirical = ncm_from_eigenvalues(&evals)?;
    let ks = ks_distance(&empirical, &theory.measure);
    let empirical_moments: Vec<f64> = (1..=4).map(|k| empirical.moment(k)).collect();
    let theory_moments: Vec<f64> = (1..=4).map(|k| theory.measure.moment(k)).collect();
    let moment_gaps = empirical_moments
        .iter()
        .zip(&theory_moments)
        .map(|(e, t)| (e - t).abs() / t.abs().max(f64::MIN_POSITIVE))
        .collect();
    let depth = config.depth();
    let empirical_q = (0..depth)
        .map(|l| records.iter().map(|r| r.per_layer_q[l]).sum::<f64>() / reps as f64)
        .collect();
    let q_gaps = (0..depth)
        .map(|l| {
            records
                .iter()
                .map(|r| (r.per_layer_q[l] - theory.schedule.q[l]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let norms: Vec<f64> = records.iter().flat_map(|r| r.norm_stat.iter().copied()).collect();
    let (norm_mean, norm_sd) = mean_sd(&norms);
    Ok(ComparisonReport {
        config: config.clone(),
        reps,
        ks,
        empirical_moments,
        theory_moments,
        moment_gaps,
        theory_q: theory.schedule.q.clone(),
        empirical_q,
        q_gaps,
        norm_mean,
        norm_sd,
        extrapolated: theory.extrapolated,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Same config at equal width `n` everywhere.
pub fn with_width(config: &NetworkConfig, n: usize) -> NetworkConfig {
    let mut c = config.clone();
    c.widths = vec![n; config.depth() + 1];
    if let InputMode::Explicit { x0 } = &config.input {
        // Keep the empirical q^1 by tiling the given input.
        c.input = InputMode::Explicit {
            x0: (0..n).map(|i| x0[i % x0.len()]).collect(),
        };
    }
    c
}

/// How replicas are seeded in a fluctuation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Seeding {
    /// Replica `r` uses stream `r`.
    Independent,
    /// Every replica reuses stream 0, so all draws coincide.
    Frozen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationRow {
    pub n: usize,
    pub reps: usize,
    /// Mean of `nu(Delta)` over replicas.
    pub mean: f64,
    /// Sample fourth central moment of `nu(Delta)`.
    pub fourth_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationTable {
    pub interval: (f64, f64),
    pub rows: Vec<FluctuationRow>,
}

/// Fourth central moment of the fraction of eigenvalues in
/// `interval = [a, b]`, at each width in `sizes`.
pub fn fluctuation_study(
    pool: &Pool,
    config: &NetworkConfig,
    interval: (f64, f64),
    reps: usize,
    sizes: &[usize],
    seeding: Seeding,
) -> Result<FluctuationTable> {
    if reps < 2 {
        return Err(Error::Config(format!(
            "fluctuation study needs at least 2 replicas, got {reps}"
        )));
    }
    let (a, b) = interval;
    if !(a <= b) {
        return Err(Error::Config(format!("empty interval [{a}, {b}]")));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let cfg = with_width(config, n);
        cfg.validate()?;
        let masses = pool.map(reps, |r| {
            let replica = match seeding {
                Seeding::Independent => r as u64,
                Seeding::Frozen => 0,
            };
            let s = jacobian_spectrum(&cfg, replica)?;
            let inside = s.eigenvalues.iter().filter(|&&v| v >= a && v <= b).count();
            Ok::<f64, Error>(inside as f64 / s.n as f64)
        })?;
        let mean = masses.iter().sum::<f64>() / reps as f64;
        let fourth_moment = masses.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / reps as f64;
        rows.push(FluctuationRow {
            n,
            reps,
            mean,
            fourth_moment,
        });
    }
    Ok(FluctuationTable { interval, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationRow {
    pub n: usize,
    pub pairs: usize,
    /// Mean KS distance between the Jacobian and surrogate spectra drawn on
    /// the same weights.
    pub dependent_vs_surrogate: f64,
    /// Mean KS distance between two independent Jacobian draws.
    pub baseline: f64,
}

/// Jacobian against surrogate spectra at several widths, with the
/// independent-resampling baseline for calibration.
pub fn interpolation_study(
    pool: &Pool,
    config: &NetworkConfig,
    sizes: &[usize],
    pairs: usize,
) -> Result<Vec<InterpolationRow>> {
    if pairs == 0 {
        return Err(Error::Config("interpolation study needs at least one pair".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let cfg = with_width(config, n);
        cfg.validate()?;
        let gaps = pool.map(pairs, |r| {
            let rec = run_replica(
                &cfg,
                r as u64,
                RunOptions {
                    surrogate: true,
                    norms: false,
                },
            )?;
            let other = jacobian_spectrum(&cfg, (r + pairs) as u64)?;
            let own = rec.spectrum.ncm()?;
            let sur = rec.surrogate_spectrum.as_ref().expect("requested").ncm()?;
            Ok::<(f64, f64), Error>((ks_distance(&own, &sur), ks_distance(&own, &other.ncm()?)))
        })?;
        let k = pairs as f64;
        rows.push(InterpolationRow {
            n,
            pairs,
            dependent_vs_surrogate: gaps.iter().map(|g| g.0).sum::<f64>() / k,
            baseline: gaps.iter().map(|g| g.1).sum::<f64>() / k,
        });
    }
    Ok(rows)
}
