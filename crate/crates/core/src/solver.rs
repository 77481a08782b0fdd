//! The self-consistent `(h, k)` system and the composition of spectral laws.
//!
//! For `M = m^-1 S X^T K X S`, with `R = S^2` of size `m`, `K` of size `n`
//! and `c = m / n`, the Stieltjes transform of the limiting spectrum is
//!
//! ```text
//! f(z) = int nu_R(dx) / (k x / c - z)
//! h(z) = int x nu_R(dx) / (k x / c - z)
//! k(z) = int x nu_K(dx) / (h x + 1)
//! ```
//!
//! with `Im h Im z > 0`, `Im k Im z < 0` off the real axis and `h, k > 0` on
//! the negative half-line. The solution is unique in that class, so any
//! converged iterate with the right signs is the solution.

use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::activations::{nu_k, q_schedule, QSchedule, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::measures::{DensityGrid, SpectralMeasure};
use crate::network::NetworkConfig;

/// Denominators below this modulus abort the evaluation.
pub const DIVISION_GUARD: f64 = 1e-14;
/// Densities below this are reported as zero.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Layout of the spectral grid, relative to an upper bound of the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridLayout {
    /// Geometric points in `[log_floor, knee] * upper`.
    pub log_points: usize,
    /// Uniform points in `(knee, 1] * upper`.
    pub linear_points: usize,
    pub log_floor: f64,
    pub knee: f64,
    /// Points per warm-started run; chunks are independent of each other.
    pub chunk: usize,
}

impl Default for GridLayout {
    fn default() -> Self {
        Self {
            log_points: 400,
            linear_points: 1800,
            log_floor: 1e-7,
            knee: 0.02,
            chunk: 64,
        }
    }
}

impl GridLayout {
    pub fn lambdas(&self, upper: f64) -> Vec<f64> {
        let lo = self.log_floor * upper;
        let knee = self.knee * upper;
        let mut out = Vec::with_capacity(self.log_points + self.linear_points);
        let ratio = libm::log(knee / lo);
        for i in 0..self.log_points {
            out.push(lo * libm::exp(ratio * i as f64 / self.log_points as f64));
        }
        for i in 0..self.linear_points {
            out.push(knee + (upper - knee) * i as f64 / (self.linear_points - 1) as f64);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Imaginary offsets used for Stieltjes inversion, strictly decreasing.
    /// Below `grid.knee * upper` the offsets shrink in proportion to lambda.
    pub eps_ladder: Vec<f64>,
    pub grid: GridLayout,
    /// Width ratio `c = m / n`.
    #[serde(rename = "c")]
    pub aspect_c: f64,
    /// Newton steps on the reduced equation for `h`, kept only when they
    /// lower the residual and stay in the admissible class.
    pub accelerate: bool,
    /// Quadrature order for the per-layer laws.
    pub order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            max_iter: 10_000,
            eps_ladder: alloc::vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            grid: GridLayout::default(),
            aspect_c: 1.0,
            accelerate: true,
            order: DEFAULT_ORDER,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, value, reason| Err(Error::InvalidParameter { name, value, reason });
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("solver.damping", self.damping, "damping must lie in (0, 1]");
        }
        if !(self.tol > 0.0) {
            return bad("solver.tol", self.tol, "tolerance must be positive");
        }
        if self.max_iter == 0 {
            return bad("solver.max_iter", 0.0, "need at least one iteration");
        }
        if self.eps_ladder.len() < 2 {
            return bad(
                "solver.eps_ladder",
                self.eps_ladder.len() as f64,
                "need two or more rungs",
            );
        }
        if self.eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(
                "solver.eps_ladder",
                self.eps_ladder[0],
                "rungs must be strictly decreasing",
            );
        }
        let last = self.eps_ladder[self.eps_ladder.len() - 1];
        if !(last >= 1e-6) {
            return bad("solver.eps_ladder", last, "smallest rung must be at least 1e-6");
        }
        if !(self.aspect_c > 0.0) || !self.aspect_c.is_finite() {
            return bad("solver.c", self.aspect_c, "width ratio must be positive");
        }
        let g = &self.grid;
        if g.log_points < 2 || g.linear_points < 2 || g.chunk == 0 {
            return bad("solver.grid", g.linear_points as f64, "grid too small");
        }
        if !(g.log_floor > 0.0 && g.log_floor < g.knee && g.knee < 1.0) {
            return bad("solver.grid.knee", g.knee, "need 0 < log_floor < knee < 1");
        }
        Ok(())
    }
}

/// Solution of the `(h, k)` system at one spectral point. `residual` is
/// `|h - h(k(h))| / max(1, |h|)`; `k` is evaluated from `h` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HkSolution {
    pub z: Complex64,
    pub h: Complex64,
    pub k: Complex64,
    pub f: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub valid: bool,
}

impl HkSolution {
    /// Distance from `z` to the positive half-line.
    pub fn zeta(&self) -> f64 {
        if self.z.re >= 0.0 {
            self.z.im.abs()
        } else {
            self.z.norm()
        }
    }
}

/// Atom lists and constants of one instance of the system.
struct System<'a> {
    r: &'a [(f64, f64)],
    kk: &'a [(f64, f64)],
    z: Complex64,
    inv_c: f64,
    kappa2: f64,
}

impl<'a> System<'a> {
    fn new(nu_r: &'a SpectralMeasure, nu_k: &'a SpectralMeasure, z: Complex64, c: f64) -> Result<Self> {
        if !(z.re.is_finite() && z.im.is_finite()) || (z.im == 0.0 && z.re >= 0.0) {
            return Err(Error::OnSupport { z, distance: 0.0 });
        }
        Ok(Self {
            r: nu_r.atoms(),
            kk: nu_k.atoms(),
            z,
            inv_c: 1.0 / c,
            kappa2: nu_k.moment(2),
        })
    }

    /// `k(h)` and `dk/dh`.
    fn k_of_h(&self, h: Complex64) -> Result<(Complex64, Complex64)> {
        let mut v = Complex64::new(0.0, 0.0);
        let mut dv = Complex64::new(0.0, 0.0);
        for &(x, w) in self.kk {
            if x == 0.0 {
                continue;
            }
            let d = h * x + 1.0;
            if d.norm_sqr() < DIVISION_GUARD * DIVISION_GUARD {
                return Err(Error::DivisionGuard(self.z));
            }
            let inv = d.inv();
            v += inv * (w * x);
            dv -= inv * inv * (w * x * x);
        }
        Ok((v, dv))
    }

    /// `h(k)` and `dh/dk`.
    fn h_of_k(&self, k: Complex64) -> Result<(Complex64, Complex64)> {
        let mut v = Complex64::new(0.0, 0.0);
        let mut dv = Complex64::new(0.0, 0.0);
        let kc = k * self.inv_c;
        for &(x, w) in self.r {
            if x == 0.0 {
                continue;
            }
            let d = kc * x - self.z;
            if d.norm_sqr() < DIVISION_GUARD * DIVISION_GUARD {
                return Err(Error::DivisionGuard(self.z));
            }
            let inv = d.inv();
            v += inv * (w * x);
            dv -= inv * inv * (w * x * x * self.inv_c);
        }
        Ok((v, dv))
    }

    fn f_of_k(&self, k: Complex64) -> Complex64 {
        let kc = k * self.inv_c;
        self.r.iter().map(|&(x, w)| w / (kc * x - self.z)).sum()
    }

    fn admissible(&self, h: Complex64) -> bool {
        if !(h.re.is_finite() && h.im.is_finite()) {
            return false;
        }
        if self.z.im != 0.0 {
            h.im * self.z.im > 0.0
        } else {
            h.re > 0.0
        }
    }

    fn k_admissible(&self, k: Complex64) -> bool {
        if self.z.im != 0.0 {
            k.im * self.z.im < 0.0
        } else {
            k.re > 0.0 && k.re <= libm::sqrt(self.kappa2) * (1.0 + 1e-9)
        }
    }

    fn solve(&self, h0: Complex64, k0: Complex64, cfg: &SolverConfig) -> Result<HkSolution> {
        let (hk0, _) = self.h_of_k(k0)?;
        let mut h = h0 + (hk0 - h0) * cfg.damping;
        let mut damping = cfg.damping;
        let mut prev = f64::INFINITY;
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        for it in 1..=cfg.max_iter {
            iterations = it;
            let (k, dk) = self.k_of_h(h)?;
            let (hn, dh) = self.h_of_k(k)?;
            residual = (hn - h).norm() / h.norm().max(1.0);
            if residual < cfg.tol {
                break;
            }
            let mut accepted = false;
            if cfg.accelerate {
                let slope = Complex64::new(1.0, 0.0) - dh * dk;
                if slope.norm() > 1e-300 {
                    let trial = h - (h - hn) / slope;
                    if self.admissible(trial) {
                        if let Ok((kt, _)) = self.k_of_h(trial) {
                            if let Ok((ht, _)) = self.h_of_k(kt) {
                                if (ht - trial).norm() / trial.norm().max(1.0) < residual {
                                    h = trial;
                                    accepted = true;
                                }
                            }
                        }
                    }
                }
            }
            if !accepted {
                if residual > prev {
                    damping = (damping * 0.5).max(1e-3);
                }
                h += (hn - h) * damping;
            }
            prev = residual;
        }
        let (k, _) = self.k_of_h(h)?;
        let (hn, _) = self.h_of_k(k)?;
        residual = residual.min((hn - h).norm() / h.norm().max(1.0));
        let f = self.f_of_k(k);
        let valid = residual < cfg.tol
            && self.admissible(h)
            && self.k_admissible(k)
            && (self.z.im == 0.0 || f.im * self.z.im > 0.0);
        Ok(HkSolution {
            z: self.z,
            h,
            k,
            f,
            residual,
            iterations,
            valid,
        })
    }
}

/// Solves the system at `z` from the large-`|z|` initialization
/// `h0 = m1(R) / (-z)`, `k0 = m1(K)`.
pub fn solve_hk(
    nu_r: &SpectralMeasure,
    nu_k: &SpectralMeasure,
    z: Complex64,
    cfg: &SolverConfig,
) -> Result<HkSolution> {
    let h0 = -nu_r.moment(1) / z;
    let k0 = Complex64::new(nu_k.moment(1), 0.0);
    solve_hk_from(nu_r, nu_k, z, cfg, h0, k0)
}

/// Solves the system at `z` starting from the pair `(h0, k0)`.
pub fn solve_hk_from(
    nu_r: &SpectralMeasure,
    nu_k: &SpectralMeasure,
    z: Complex64,
    cfg: &SolverConfig,
    h0: Complex64,
    k0: Complex64,
) -> Result<HkSolution> {
    System::new(nu_r, nu_k, z, cfg.aspect_c)?.solve(h0, k0, cfg)
}

/// Generic mass at the origin of the composed law: the rank of
/// `S X^T K X S` is at most `min(rank R, rank K)` on `m` dimensions.
pub fn origin_atom(nu_k: &SpectralMeasure, nu_r: &SpectralMeasure, c: f64) -> f64 {
    let from_k = 1.0 - (1.0 - nu_k.mass_at_zero()) / c;
    nu_r.mass_at_zero().max(from_k).clamp(0.0, 1.0)
}

/// Upper bound of the support of the composed law.
pub fn support_bound(nu_k: &SpectralMeasure, nu_r: &SpectralMeasure, c: f64) -> f64 {
    let sc = libm::sqrt(c);
    nu_k.max_location() * nu_r.max_location() * (1.0 + sc) * (1.0 + sc) / c
}

/// Runs independent chunks of the density grid; implementations may run
/// them concurrently but must return them in order.
pub trait GridExecutor {
    fn map_chunks(&self, n_chunks: usize, job: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>>;
}

/// Runs chunks one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl GridExecutor for Serial {
    fn map_chunks(&self, n_chunks: usize, job: &(dyn Fn(usize) -> Result<Vec<f64>> + Sync)) -> Result<Vec<Vec<f64>>> {
        (0..n_chunks).map(job).collect()
    }
}

struct Inversion<'a> {
    nu_r: &'a SpectralMeasure,
    nu_k: &'a SpectralMeasure,
    cfg: &'a SolverConfig,
    atom: f64,
    knee: f64,
}

impl Inversion<'_> {
    fn offsets(&self, lambda: f64) -> Vec<f64> {
        let scale = if lambda < self.knee { lambda / self.knee } else { 1.0 };
        self.cfg.eps_ladder.iter().map(|e| e * scale).collect()
    }

    /// Walks `z = lambda + i t` from `t = 1` down to `target`.
    fn cold(&self, lambda: f64, target: f64) -> Result<HkSolution> {
        let t = target.max(1.0);
        let sol = solve_hk(self.nu_r, self.nu_k, Complex64::new(lambda, t), self.cfg)?;
        if !sol.valid || t <= target {
            return Ok(sol);
        }
        self.walk(sol, None, target)
    }

    /// Continues a valid solution down to `z.im = target` with adaptive
    /// steps. Starts are extrapolated from the last two accepted points as a
    /// power law in `t`, which tracks the `1 / z` growth of `h` near an
    /// origin atom.
    fn walk(&self, mut sol: HkSolution, mut before: Option<HkSolution>, target: f64) -> Result<HkSolution> {
        let lambda = sol.z.re;
        let mut factor = 3.0;
        while sol.z.im > target {
            let t_prev = sol.z.im;
            let t = (t_prev / factor).max(target);
            let z = Complex64::new(lambda, t);
            let mut starts = Vec::with_capacity(2);
            if let Some(b) = before {
                let span = libm::log(b.z.im / t_prev);
                if span > 0.0 && b.h.norm() > 0.0 && b.k.norm() > 0.0 {
                    let p = libm::log(t_prev / t) / span;
                    let h = sol.h * (sol.h / b.h).powf(p);
                    let k = sol.k * (sol.k / b.k).powf(p);
                    if h.re.is_finite() && h.im.is_finite() && k.re.is_finite() && k.im.is_finite() {
                        starts.push((h, k));
                    }
                }
            }
            starts.push((sol.h, sol.k));
            let mut next = None;
            for (h0, k0) in starts {
                if let Ok(s) = solve_hk_from(self.nu_r, self.nu_k, z, self.cfg, h0, k0) {
                    if s.valid {
                        next = Some(s);
                        break;
                    }
                }
            }
            match next {
                Some(s) => {
                    before = Some(sol);
                    sol = s;
                    factor = (factor * 1.5).min(3.0);
                }
                None if factor > 1.05 => factor = libm::sqrt(factor),
                None => {
                    return solve_hk_from(self.nu_r, self.nu_k, z, self.cfg, sol.h, sol.k);
                }
            }
        }
        Ok(sol)
    }

    /// Solutions at every rung for one lambda, warm-started from `seed`.
    fn point(&self, lambda: f64, seed: Option<&[HkSolution]>) -> Result<Vec<HkSolution>> {
        let offsets = self.offsets(lambda);
        let mut out: Vec<HkSolution> = Vec::with_capacity(offsets.len());
        for (j, &eps) in offsets.iter().enumerate() {
            let z = Complex64::new(lambda, eps);
            let mut sol = match seed {
                Some(s) => solve_hk_from(self.nu_r, self.nu_k, z, self.cfg, s[j].h, s[j].k)?,
                None => match out.last() {
                    Some(&last) => {
                        let before = if out.len() > 1 { Some(out[out.len() - 2]) } else { None };
                        self.walk(last, before, eps)?
                    }
                    None => self.cold(lambda, eps)?,
                },
            };
            if !sol.valid && seed.is_some() {
                sol = self.cold(lambda, eps)?;
            }
            if !sol.valid {
                return Err(Error::InvalidSolution {
                    lambda,
                    residual: sol.residual,
                });
            }
            out.push(sol);
        }
        Ok(out)
    }

    /// Richardson extrapolation of `Im f / pi` on the two smallest offsets,
    /// after removing the origin atom's contribution.
    fn density(&self, rungs: &[HkSolution]) -> f64 {
        let n = rungs.len();
        let d = |s: &HkSolution| (s.f + self.atom / s.z).im / core::f64::consts::PI;
        let (a, b) = (&rungs[n - 2], &rungs[n - 1]);
        let (ea, eb) = (a.z.im, b.z.im);
        let (da, db) = (d(a), d(b));
        let v = db + (db - da) * eb / (ea - eb);
        if v < DENSITY_FLOOR {
            0.0
        } else {
            v
        }
    }

    fn chunk(&self, lambdas: &[f64]) -> Result<Vec<f64>> {
        let mut prev: Option<Vec<HkSolution>> = None;
        let mut out = Vec::with_capacity(lambdas.len());
        for &lambda in lambdas {
            let rungs = match self.point(lambda, prev.as_deref()) {
                Ok(r) => r,
                Err(_) if prev.is_some() => self.point(lambda, None)?,
                Err(e) => return Err(e),
            };
            out.push(self.density(&rungs));
            prev = Some(rungs);
        }
        Ok(out)
    }
}

/// Density of `nu_K <> nu_R` on the configured grid (continuous part only;
/// the origin atom is reported separately).
pub fn resolve_density(nu_r: &SpectralMeasure, nu_k: &SpectralMeasure, cfg: &SolverConfig) -> Result<DensityGrid> {
    resolve_density_with(&Serial, nu_r, nu_k, cfg)
}

pub fn resolve_density_with(
    exec: &dyn GridExecutor,
    nu_r: &SpectralMeasure,
    nu_k: &SpectralMeasure,
    cfg: &SolverConfig,
) -> Result<DensityGrid> {
    cfg.validate()?;
    let c = cfg.aspect_c;
    let upper = support_bound(nu_k, nu_r, c) * 1.02;
    if !(upper > 0.0) {
        // Both laws sit at the origin: nothing continuous to resolve.
        return DensityGrid::new(alloc::vec![0.0, 1.0], alloc::vec![0.0, 0.0], 1.0);
    }
    let lambdas = cfg.grid.lambdas(upper);
    let inv = Inversion {
        nu_r,
        nu_k,
        cfg,
        atom: origin_atom(nu_k, nu_r, c),
        knee: cfg.grid.knee * upper,
    };
    let size = cfg.grid.chunk;
    let n_chunks = lambdas.len().div_ceil(size);
    let job = |i: usize| inv.chunk(&lambdas[i * size..((i + 1) * size).min(lambdas.len())]);
    let densities: Vec<f64> = exec.map_chunks(n_chunks, &job)?.into_iter().flatten().collect();
    DensityGrid::new(lambdas, densities, inv.atom)
}

/// Re-atomizes a resolved density with trapezoid weights, plus the origin
/// atom, so that the result has unit mass.
///
/// The grid misses the mass of an integrable singularity below its first
/// point. That shortfall is spread over geometrically spaced atoms below the
/// grid following the power law `lambda^-alpha` fitted to the first grid
/// densities; an excess is scaled away.
pub fn atomize(grid: &DensityGrid) -> Result<SpectralMeasure> {
    let target = 1.0 - grid.origin_atom;
    let weights = grid.trapezoid_weights();
    let mass: f64 = weights.iter().sum();
    let (scale, deficit) = if mass < target || !(mass > 0.0) {
        (1.0, target - mass.max(0.0))
    } else {
        (target / mass, 0.0)
    };
    let atoms = grid
        .lambdas
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| (x, w * scale))
        .chain(low_tail(grid, deficit))
        .chain(core::iter::once((0.0, grid.origin_atom.max(0.0))));
    SpectralMeasure::from_atoms(atoms)
}

/// Decades covered by the extrapolated tail below the grid.
const TAIL_DECADES: usize = 12;
/// Atoms per decade in that tail.
const TAIL_PER_DECADE: usize = 16;
/// Grid points spanned by the power-law fit at the lower end.
const TAIL_FIT_SPAN: usize = 20;

/// Atoms carrying `deficit` below the first grid point, distributed with
/// cumulative mass `~ lambda^(1 - alpha)`.
fn low_tail(grid: &DensityGrid, deficit: f64) -> Vec<(f64, f64)> {
    if !(deficit > 0.0) {
        return Vec::new();
    }
    let l = &grid.lambdas;
    let d = &grid.densities;
    let j = TAIL_FIT_SPAN.min(l.len() - 1);
    let alpha = if d[0] > 0.0 && d[j] > 0.0 {
        (libm::log(d[0] / d[j]) / libm::log(l[j] / l[0])).clamp(0.0, 0.95)
    } else {
        0.0
    };
    let beta = 1.0 - alpha;
    let steps = TAIL_DECADES * TAIL_PER_DECADE;
    let step = 1.0 / TAIL_PER_DECADE as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut upper_cdf = 1.0;
    for k in 1..=steps {
        // Mass in (l0 10^-(k step), l0 10^-((k-1) step)] at the geometric midpoint.
        let lower_cdf = libm::pow(10.0, -(k as f64) * step * beta);
        let at = l[0] * libm::pow(10.0, (0.5 - k as f64) * step);
        out.push((at, deficit * (upper_cdf - lower_cdf)));
        upper_cdf = lower_cdf;
    }
    out.push((l[0] * libm::pow(10.0, -(TAIL_DECADES as f64)), deficit * upper_cdf));
    out
}

pub fn diamond(nu_k: &SpectralMeasure, nu_r: &SpectralMeasure, cfg: &SolverConfig) -> Result<SpectralMeasure> {
    diamond_with(&Serial, nu_k, nu_r, cfg)
}

pub fn diamond_with(
    exec: &dyn GridExecutor,
    nu_k: &SpectralMeasure,
    nu_r: &SpectralMeasure,
    cfg: &SolverConfig,
) -> Result<SpectralMeasure> {
    atomize(&resolve_density_with(exec, nu_r, nu_k, cfg)?)
}

/// `nu_K[L-1] <> ... <> nu_K[0] <> delta_1`.
pub fn propagate_layers(nu_ks: &[SpectralMeasure], cfg: &SolverConfig) -> Result<SpectralMeasure> {
    propagate_layers_with(&Serial, nu_ks, cfg)
}

pub fn propagate_layers_with(
    exec: &dyn GridExecutor,
    nu_ks: &[SpectralMeasure],
    cfg: &SolverConfig,
) -> Result<SpectralMeasure> {
    let mut nu = SpectralMeasure::dirac(1.0)?;
    for nu_k in nu_ks {
        nu = diamond_with(exec, nu_k, &nu, cfg)?;
    }
    Ok(nu)
}

/// Limiting spectrum of `J J^T` for a configured network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheorySpectrum {
    /// Counting measure on the `n_L` output dimensions.
    pub measure: SpectralMeasure,
    pub schedule: QSchedule,
    pub layer_laws: Vec<SpectralMeasure>,
    /// Density of the last composition on `n_L` dimensions.
    pub density: DensityGrid,
    /// Set when unequal widths meet more than one layer: the composition
    /// then goes beyond the equal-width limit theorem.
    pub extrapolated: bool,
}

pub fn theory_spectrum(config: &NetworkConfig, cfg: &SolverConfig) -> Result<TheorySpectrum> {
    theory_spectrum_with(&Serial, config, cfg)
}

pub fn theory_spectrum_with(
    exec: &dyn GridExecutor,
    config: &NetworkConfig,
    cfg: &SolverConfig,
) -> Result<TheorySpectrum> {
    config.validate()?;
    let depth = config.depth();
    let q1 = config.q1()?;
    let schedule = q_schedule(q1, depth, &config.activation, config.sigma_b2, config.recurrence)?;
    let layer_laws = schedule
        .q
        .iter()
        .map(|&q| nu_k(&config.activation, q, cfg.order))
        .collect::<Result<Vec<_>>>()?;
    let ratios = config.aspect_ratios();
    let mut nu = SpectralMeasure::dirac(1.0)?;
    let mut density = None;
    for (l, law) in layer_laws.iter().enumerate() {
        let mut layer_cfg = cfg.clone();
        layer_cfg.aspect_c = ratios[l];
        let (from, to) = (config.widths[l] as f64, config.widths[l + 1] as f64);
        let grid = resolve_density_with(exec, &nu, law, &layer_cfg)?;
        nu = atomize(&grid)?.resize(from, to)?;
        density = Some(grid.resize(from, to)?);
    }
    Ok(TheorySpectrum {
        measure: nu,
        schedule,
        layer_laws,
        density: density.expect("depth is at least 1"),
        extrapolated: depth > 1 && !config.is_square(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> f64 {
        (libm::sqrt(5.0) - 1.0) / 2.0
    }

    #[test]
    fn unit_diracs_at_minus_one() {
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let s = solve_hk(&d1, &d1, Complex64::new(-1.0, 0.0), &SolverConfig::default()).unwrap();
        assert!(s.valid);
        assert!((s.h.re - golden()).abs() < 1e-10);
        assert!((s.k.re - golden()).abs() < 1e-10);
        assert!((s.f.re - golden()).abs() < 1e-10);
        assert!(s.residual < 1e-10);
    }

    #[test]
    fn pure_damped_iteration_agrees() {
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let cfg = SolverConfig {
            accelerate: false,
            ..SolverConfig::default()
        };
        let z = Complex64::new(2.0, 0.3);
        let a = solve_hk(&d1, &d1, z, &cfg).unwrap();
        let b = solve_hk(&d1, &d1, z, &SolverConfig::default()).unwrap();
        assert!(a.valid && b.valid);
        assert!((a.f - b.f).norm() < 1e-10);
    }

    #[test]
    fn sign_conditions_off_axis() {
        let r = SpectralMeasure::from_atoms([(0.5, 1.0), (2.0, 1.0)]).unwrap();
        let k = SpectralMeasure::from_atoms([(0.0, 1.0), (1.0, 2.0)]).unwrap();
        let s = solve_hk(&r, &k, Complex64::new(2.0, 1.0), &SolverConfig::default()).unwrap();
        assert!(s.valid);
        assert!(s.h.im > 0.0 && s.k.im < 0.0 && s.f.im > 0.0);
        let s = solve_hk(&r, &k, Complex64::new(2.0, -1.0), &SolverConfig::default()).unwrap();
        assert!(s.valid && s.h.im < 0.0 && s.k.im > 0.0);
    }

    #[test]
    fn rejects_points_on_the_half_line() {
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_hk(&d1, &d1, Complex64::new(0.5, 0.0), &cfg).is_err());
        assert!(solve_hk(&d1, &d1, Complex64::new(0.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn f_matches_closed_form_identity() {
        let r = SpectralMeasure::from_atoms([(0.2, 1.0), (3.0, 1.0)]).unwrap();
        let k = SpectralMeasure::from_atoms([(0.5, 1.0), (1.5, 1.0)]).unwrap();
        for c in [1.0, 0.5, 2.0] {
            let cfg = SolverConfig {
                aspect_c: c,
                ..SolverConfig::default()
            };
            let z = Complex64::new(1.0, 0.4);
            let s = solve_hk(&r, &k, z, &cfg).unwrap();
            let alt = -z.inv() + s.h * s.k / (c * z);
            assert!((s.f - alt).norm() < 1e-10, "c={c}");
        }
    }

    #[test]
    fn max_iter_exceeded_is_reported_not_raised() {
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let cfg = SolverConfig {
            max_iter: 1,
            accelerate: false,
            ..SolverConfig::default()
        };
        let s = solve_hk(&d1, &d1, Complex64::new(1.0, 0.01), &cfg).unwrap();
        assert!(!s.valid && s.residual > cfg.tol);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.eps_ladder = alloc::vec![1e-2, 1e-2];
        assert!(cfg.validate().is_err());
        cfg.eps_ladder = alloc::vec![1e-2, 1e-7];
        assert!(cfg.validate().is_err());
        cfg = SolverConfig {
            damping: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn origin_atom_counts_rank() {
        let k = SpectralMeasure::from_atoms([(0.0, 0.3), (1.0, 0.7)]).unwrap();
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        assert!((origin_atom(&k, &d1, 1.0) - 0.3).abs() < 1e-15);
        assert!((origin_atom(&d1, &d1, 4.0) - 0.75).abs() < 1e-15);
        assert_eq!(origin_atom(&d1, &d1, 0.25), 0.0);
    }
}
