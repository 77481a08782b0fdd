//! Moment generating functions and S-transforms.
//!
//! `m(z) = sum_k m_k z^k = int x z / (1 - x z) mu(dx)`, its functional
//! inverse `z(m)` on the real branch through the origin, and
//! `S(m) = (1 + m) z(m) / m`. Under the composition `K <> R` the
//! S-transforms multiply with an extra Marchenko-Pastur factor
//! `(1 + m)^-1`.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::SpectralMeasure;

/// Default number of moments carried in a [`MomentSeries`].
pub const SERIES_LEN: usize = 12;

const NEWTON_MAX_ITER: usize = 200;

/// Leading moments `m_1..m_K` of a law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub coeffs: Vec<f64>,
    pub source: String,
}

impl MomentSeries {
    pub fn from_measure(mu: &SpectralMeasure, len: usize, source: impl Into<String>) -> Self {
        Self {
            coeffs: (1..=len as u32).map(|k| mu.moment(k)).collect(),
            source: source.into(),
        }
    }

    /// `m_k`, 1-based; `m_0 = 1`.
    pub fn get(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.coeffs[k - 1]
        }
    }

    /// Leading principal minors of the Hankel matrix `[m_{i+j}]`, `i, j < 3`.
    pub fn hankel_minors(&self) -> [f64; 3] {
        let m = |k| self.get(k);
        let d1 = m(0);
        let d2 = m(0) * m(2) - m(1) * m(1);
        let d3 = m(0) * (m(2) * m(4) - m(3) * m(3)) - m(1) * (m(1) * m(4) - m(3) * m(2))
            + m(2) * (m(1) * m(3) - m(2) * m(2));
        [d1, d2, d3]
    }

    pub fn is_valid(&self) -> bool {
        self.coeffs.len() >= 4
            && self
                .hankel_minors()
                .iter()
                .all(|&d| d >= -1e-12 * self.get(4).abs().max(1.0))
    }
}

/// `m(z) = sum w x z / (1 - x z)`.
pub fn moment_gen(mu: &SpectralMeasure, z: Complex64) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for &(x, w) in mu.atoms() {
        let d = Complex64::new(1.0, 0.0) - z * x;
        if d.norm() < 1e-12 {
            return Err(Error::OnSupport {
                z: z.inv(),
                distance: d.norm(),
            });
        }
        acc += w * x * z / d;
    }
    Ok(acc)
}

fn moment_gen_real(mu: &SpectralMeasure, z: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for &(x, w) in mu.atoms() {
        let d = 1.0 - x * z;
        v += w * x * z / d;
        dv += w * x / (d * d);
    }
    (v, dv)
}

/// Real `z < 1 / max supp mu` with `m(z) = m_target`.
///
/// On that half-line `m` increases from `-(1 - mu({0}))` to `+inf`, so the
/// root is bracketed and found by Newton steps with bisection fallback.
pub fn functional_inverse(mu: &SpectralMeasure, m_target: f64, tol: f64) -> Result<f64> {
    let m1 = mu.moment(1);
    let lower = -(1.0 - mu.mass_at_zero());
    if !(m1 > 0.0) {
        return Err(Error::OutsideBranch {
            target: m_target,
            lower: 0.0,
            upper: 0.0,
        });
    }
    if !(m_target > lower) || !m_target.is_finite() {
        return Err(Error::OutsideBranch {
            target: m_target,
            lower,
            upper: f64::INFINITY,
        });
    }
    if m_target == 0.0 {
        return Ok(0.0);
    }
    let pole = 1.0 / mu.max_location();
    // Bracket [lo, hi] with m(lo) < target < m(hi).
    let (mut lo, mut hi) = if m_target > 0.0 {
        (0.0, pole)
    } else {
        let mut lo = -1.0 / m1;
        while moment_gen_real(mu, lo).0 >= m_target {
            lo *= 2.0;
            if !lo.is_finite() {
                return Err(Error::OutsideBranch {
                    target: m_target,
                    lower,
                    upper: f64::INFINITY,
                });
            }
        }
        (lo, 0.0)
    };
    let mut z = (m_target / m1).clamp(lo, hi);
    if z >= pole {
        z = 0.5 * (lo + hi);
    }
    for _ in 0..NEWTON_MAX_ITER {
        let (v, dv) = moment_gen_real(mu, z);
        let r = v - m_target;
        if r.abs() < tol {
            return Ok(z);
        }
        if r > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let step = z - r / dv;
        z = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * z.abs() {
            let (v, _) = moment_gen_real(mu, z);
            if (v - m_target).abs() < tol.max(1e-9 * m_target.abs()) {
                return Ok(z);
            }
            break;
        }
    }
    let (v, _) = moment_gen_real(mu, z);
    Err(Error::NoConvergence {
        what: "functional inverse",
        iterations: NEWTON_MAX_ITER,
        residual: (v - m_target).abs(),
    })
}

pub fn s_transform(mu: &SpectralMeasure, m: f64, tol: f64) -> Result<f64> {
    if m == 0.0 {
        return Err(Error::InvalidParameter {
            name: "m",
            value: m,
            reason: "the S-transform formula is singular at m = 0",
        });
    }
    Ok((1.0 + m) / m * functional_inverse(mu, m, tol)?)
}

/// Per-point residuals of `S_{M'}(m) = S_K(m) (1 + m)^-1 S_M(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductLawReport {
    pub points: Vec<ProductLawPoint>,
    pub max_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductLawPoint {
    pub m: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Checks the S-transform product law between `nu_M_next = nu_K <> nu_M`
/// and its factors. Points where a transform cannot be evaluated get an
/// infinite residual.
pub fn check_product_law(
    nu_k: &SpectralMeasure,
    nu_m: &SpectralMeasure,
    nu_m_next: &SpectralMeasure,
    m_points: &[f64],
) -> ProductLawReport {
    const TOL: f64 = 1e-13;
    let points: Vec<ProductLawPoint> = m_points
        .iter()
        .map(|&m| {
            let lhs = s_transform(nu_m_next, m, TOL);
            let rhs = s_transform(nu_k, m, TOL).and_then(|a| Ok(a * s_transform(nu_m, m, TOL)? / (1.0 + m)));
            match (lhs, rhs) {
                (Ok(l), Ok(r)) => ProductLawPoint {
                    m,
                    lhs: l,
                    rhs: r,
                    residual: (l - r).abs(),
                },
                (l, r) => ProductLawPoint {
                    m,
                    lhs: l.unwrap_or(f64::NAN),
                    rhs: r.unwrap_or(f64::NAN),
                    residual: f64::INFINITY,
                },
            }
        })
        .collect();
    let max_residual = points.iter().fold(0.0f64, |a, p| a.max(p.residual));
    ProductLawReport { points, max_residual }
}

/// The equal-width functional equation for `m = m_{M^L}(z)`:
/// `m = m_K(z^{1/L} (1 + m)^{1/L} m^{1 - 1/L})`.
struct EqualWidth<'a> {
    nu_k: &'a SpectralMeasure,
    inv_l: f64,
}

impl EqualWidth<'_> {
    /// Argument `w(m)` of `m_K`, written as `z (1+m)^{1/L} (m/z)^{1-1/L}` so
    /// that principal powers are taken near the positive axis.
    fn w(&self, z: Complex64, m: Complex64) -> Complex64 {
        z * (Complex64::new(1.0, 0.0) + m).powf(self.inv_l) * (m / z).powf(1.0 - self.inv_l)
    }

    /// Residual `m - m_K(w(m))` and its derivative in `m`.
    fn residual(&self, z: Complex64, m: Complex64) -> Result<(Complex64, Complex64)> {
        let w = self.w(z, m);
        let mut mk = Complex64::new(0.0, 0.0);
        let mut dmk = Complex64::new(0.0, 0.0);
        for &(x, wt) in self.nu_k.atoms() {
            let d = Complex64::new(1.0, 0.0) - w * x;
            if d.norm() < 1e-12 {
                return Err(Error::BranchAmbiguity(z));
            }
            mk += wt * x * w / d;
            dmk += wt * x / (d * d);
        }
        let one = Complex64::new(1.0, 0.0);
        let dw = w * (self.inv_l / (one + m) + (1.0 - self.inv_l) / m);
        Ok((m - mk, one - dmk * dw))
    }

    fn newton(&self, z: Complex64, mut m: Complex64, tol: f64) -> Result<Complex64> {
        for _ in 0..NEWTON_MAX_ITER {
            let (r, dr) = self.residual(z, m)?;
            if r.norm() < tol {
                return Ok(m);
            }
            let mut step = r / dr;
            // Keep m/z on the principal sheet used by `w`.
            let mut trial = m - step;
            let mut tries = 0;
            while (trial / z).re <= 0.0 && tries < 30 {
                step *= 0.5;
                trial = m - step;
                tries += 1;
            }
            m = trial;
        }
        let (r, _) = self.residual(z, m)?;
        if r.norm() < tol * 1e3 {
            return Ok(m);
        }
        Err(Error::NoConvergence {
            what: "equal-width functional equation",
            iterations: NEWTON_MAX_ITER,
            residual: r.norm(),
        })
    }
}

/// Steps of the radial continuation from the series region.
const CONTINUATION_STEPS: usize = 24;

/// Solves the equal-width functional equation at `z`, continuing radially
/// from `z / 2^CONTINUATION_STEPS`, where `m ~ m_1(K)^L z`. A jump of the solution
/// along the path is reported as a branch ambiguity.
pub fn solve_equal_width(nu_k: &SpectralMeasure, depth: usize, z: Complex64, tol: f64) -> Result<Complex64> {
    if depth < 1 {
        return Err(Error::InvalidParameter {
            name: "L",
            value: depth as f64,
            reason: "depth must be at least 1",
        });
    }
    if z.norm() == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let m1 = nu_k.moment(1);
    if !(m1 > 0.0) {
        return Err(Error::DegenerateDerivative(0.0));
    }
    let eq = EqualWidth {
        nu_k,
        inv_l: 1.0 / depth as f64,
    };
    let mut t = libm::pow(0.5, CONTINUATION_STEPS as f64);
    let mut zt = z * t;
    let mut m = eq.newton(zt, zt * libm::pow(m1, depth as f64), tol)?;
    for _ in 0..CONTINUATION_STEPS {
        let ratio = m / zt;
        t *= 2.0;
        zt = z * t;
        // Linear extrapolation in t: m(2t) ~ 2 m(t) to first order.
        let guess = ratio * zt;
        let next = eq.newton(zt, guess, tol)?;
        let jump = (next / zt - ratio).norm();
        if jump > 0.5 * ratio.norm() + 1.0 {
            return Err(Error::BranchAmbiguity(zt));
        }
        m = next;
    }
    Ok(m)
}

/// Moments of the law solving the equal-width equation, by trapezoid Cauchy
/// integrals of `m(z) / z^{k+1}` on a circle inside the series region.
pub fn equal_width_moments(nu_k: &SpectralMeasure, depth: usize, len: usize, tol: f64) -> Result<MomentSeries> {
    let lf = depth as f64;
    // Edge of the Fuss-Catalan law MP^{L}, scaled by max supp K.
    let edge = libm::pow(nu_k.max_location(), lf) * libm::pow(lf + 1.0, lf + 1.0) / libm::pow(lf, lf);
    let radius = 0.5 / edge;
    let nodes = 64.max(4 * len);
    let mut coeffs = alloc::vec![0.0; len];
    for j in 0..nodes {
        let theta = 2.0 * PI * (j as f64 + 0.5) / nodes as f64;
        let z = Complex64::from_polar(radius, theta);
        let m = solve_equal_width(nu_k, depth, z, tol)?;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += (m * z.powi(-(k as i32 + 1))).re / nodes as f64;
        }
    }
    Ok(MomentSeries {
        coeffs,
        source: alloc::format!("equal-width equation, L = {depth}"),
    })
}
