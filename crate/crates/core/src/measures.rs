//! Probability measures on the nonnegative half-line.
//!
//! Every law in the crate, empirical or limiting, is a finite list of
//! weighted atoms. Continuous laws are carried by their quadrature
//! discretization, so composition outputs, `nu_K` and normalized counting
//! measures of sampled matrices are interchangeable.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as a broken PSD computation.
pub const EIGEN_CLAMP: f64 = -1e-10;
/// Total mass accepted as normalized without rescaling.
pub const NORMALIZED_TOL: f64 = 1e-12;
/// Relative tolerance under which two atom locations are merged.
pub const MERGE_RTOL: f64 = 1e-12;
/// Minimum distance from a spectral argument to the support.
pub const SUPPORT_GUARD: f64 = 1e-12;

const MASS_TOL: f64 = 1e-12;

/// Probability measure made of atoms `(location, weight)`.
///
/// Locations are nonnegative, sorted and distinct (up to [`MERGE_RTOL`]);
/// weights are positive and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
}

impl SpectralMeasure {
    /// Builds a measure from raw atoms, sorting, merging duplicates and
    /// normalizing the total mass. Zero weights are dropped.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut raw: Vec<(f64, f64)> = Vec::new();
        for (location, weight) in atoms {
            if !location.is_finite() || location < 0.0 || !weight.is_finite() || weight < 0.0 {
                return Err(Error::InvalidAtom { location, weight });
            }
            if weight > 0.0 {
                raw.push((location, weight));
            }
        }
        if raw.is_empty() {
            return Err(Error::Empty("measure has no positive weight"));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (location, weight) in raw {
            match merged.last_mut() {
                Some(last) if same_location(last.0, location) => last.1 += weight,
                _ => merged.push((location, weight)),
            }
        }
        // Weights already normalized to round-off are kept bit-for-bit, so
        // that serialized measures read back unchanged.
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > NORMALIZED_TOL {
            for atom in &mut merged {
                atom.1 /= total;
            }
        }
        Ok(Self { atoms: merged })
    }

    /// Unit mass at `location`.
    pub fn dirac(location: f64) -> Result<Self> {
        Self::from_atoms([(location, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn max_location(&self) -> f64 {
        self.atoms.last().map_or(0.0, |a| a.0)
    }

    /// Mass carried exactly at the origin.
    pub fn mass_at_zero(&self) -> f64 {
        match self.atoms.first() {
            Some(&(0.0, w)) => w,
            _ => 0.0,
        }
    }

    /// `sum w * x^k`.
    pub fn moment(&self, k: u32) -> f64 {
        self.atoms.iter().map(|&(x, w)| w * libm::pow(x, k as f64)).sum()
    }

    /// `sum w / (x - z)`.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(x, w) in &self.atoms {
            let d = Complex64::new(x, 0.0) - z;
            let dist = d.norm();
            if dist < SUPPORT_GUARD {
                return Err(Error::OnSupport { z, distance: dist });
            }
            acc += w / d;
        }
        Ok(acc)
    }

    /// Cumulative distribution `mu([0, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.0 <= x).map(|a| a.1).sum()
    }

    /// Pushes the measure forward under `x -> scale * x`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::InvalidParameter {
                name: "scale",
                value: scale,
                reason: "must be positive and finite",
            });
        }
        Self::from_atoms(self.atoms.iter().map(|&(x, w)| (x * scale, w)))
    }

    /// Re-expresses the counting measure of a rank-deficient product on a
    /// different matrix dimension: nonzero eigenvalues are shared, only the
    /// share of zeros changes. `from_dim`/`to_dim` only enter as a ratio.
    pub fn resize(&self, from_dim: f64, to_dim: f64) -> Result<Self> {
        if (from_dim - to_dim).abs() <= MASS_TOL * from_dim.max(to_dim) {
            return Ok(self.clone());
        }
        let ratio = from_dim / to_dim;
        let nonzero = (1.0 - self.mass_at_zero()) * ratio;
        if nonzero > 1.0 + 1e-9 {
            return Err(Error::InvalidParameter {
                name: "to_dim",
                value: to_dim,
                reason: "too few dimensions to hold the nonzero spectrum",
            });
        }
        let zero = (1.0 - nonzero).max(0.0);
        let atoms =
            core::iter::once((0.0, zero)).chain(self.atoms.iter().filter(|a| a.0 > 0.0).map(|&(x, w)| (x, w * ratio)));
        Self::from_atoms(atoms)
    }
}

impl<'de> Deserialize<'de> for SpectralMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            atoms: Vec<(f64, f64)>,
        }
        let raw = Raw::deserialize(de)?;
        Self::from_atoms(raw.atoms).map_err(serde::de::Error::custom)
    }
}

fn same_location(a: f64, b: f64) -> bool {
    (a - b).abs() <= MERGE_RTOL * a.abs().max(b.abs())
}

/// Normalized counting measure of a list of eigenvalues.
pub fn ncm_from_eigenvalues(evals: &[f64]) -> Result<SpectralMeasure> {
    if evals.is_empty() {
        return Err(Error::Empty("eigenvalue list"));
    }
    let w = 1.0 / evals.len() as f64;
    let mut atoms = Vec::with_capacity(evals.len());
    for &e in evals {
        if !e.is_finite() {
            return Err(Error::NonFinite {
                context: "eigenvalue",
                value: e,
            });
        }
        if e < EIGEN_CLAMP {
            return Err(Error::NegativeEigenvalue(e));
        }
        atoms.push((e.max(0.0), w));
    }
    SpectralMeasure::from_atoms(atoms)
}

/// `sup_x |F_a(x) - F_b(x)|`, evaluated at the union of atom locations.
pub fn ks_distance(a: &SpectralMeasure, b: &SpectralMeasure) -> f64 {
    let (xa, xb) = (a.atoms(), b.atoms());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut sup = 0.0f64;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i].0 <= next {
            fa += xa[i].1;
            i += 1;
        }
        while j < xb.len() && xb[j].0 <= next {
            fb += xb[j].1;
            j += 1;
        }
        sup = sup.max((fa - fb).abs());
    }
    sup.min(1.0)
}

/// Number of atoms in the discretized Marchenko-Pastur law.
pub const MP_ATOMS: usize = 4000;

/// Marchenko-Pastur law with ratio `c` (dimension over sample count, unit
/// mean), discretized on [`MP_ATOMS`] atoms.
///
/// The continuous part is integrated in the angle variable
/// `x = a + (b - a)(1 - cos t)/2`, which turns the square-root edges into a
/// smooth periodic integrand, so the midpoint rule in `t` is spectrally
/// accurate for moments and transforms.
pub fn mp_reference(c: f64) -> Result<SpectralMeasure> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter {
            name: "c",
            value: c,
            reason: "Marchenko-Pastur ratio must be positive",
        });
    }
    let sc = libm::sqrt(c);
    let (lo, hi) = ((1.0 - sc) * (1.0 - sc), (1.0 + sc) * (1.0 + sc));
    let half = 0.5 * (hi - lo);
    let dt = PI / MP_ATOMS as f64;
    let mut atoms = Vec::with_capacity(MP_ATOMS + 1);
    let mut total = 0.0;
    for i in 0..MP_ATOMS {
        let t = (i as f64 + 0.5) * dt;
        let (s, co) = (libm::sin(t), libm::cos(t));
        let x = lo + half * (1.0 - co);
        // Avoid 0/0 at the hard edge when c = 1: sin^2/(1 - cos) = 1 + cos.
        let w = if lo == 0.0 {
            half * (1.0 + co) / (2.0 * PI * c)
        } else {
            half * half * s * s / (2.0 * PI * c * x)
        } * dt;
        total += w;
        atoms.push((x, w));
    }
    let continuous = if c > 1.0 { 1.0 / c } else { 1.0 };
    for a in &mut atoms {
        a.1 *= continuous / total;
    }
    if c > 1.0 {
        atoms.push((0.0, 1.0 - 1.0 / c));
    }
    SpectralMeasure::from_atoms(atoms)
}

/// Closed-form Marchenko-Pastur density (continuous part) with ratio `c`.
pub fn mp_density(c: f64, x: f64) -> f64 {
    let sc = libm::sqrt(c);
    let (lo, hi) = ((1.0 - sc) * (1.0 - sc), (1.0 + sc) * (1.0 + sc));
    if x <= lo || x >= hi {
        return 0.0;
    }
    libm::sqrt((hi - x) * (x - lo)) / (2.0 * PI * c * x)
}

/// Density sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub lambdas: Vec<f64>,
    pub densities: Vec<f64>,
    /// Trapezoid integral of the densities.
    pub mass_estimate: f64,
    /// Point mass at the origin that is not represented by `densities`.
    #[serde(default)]
    pub origin_atom: f64,
}

impl DensityGrid {
    pub fn new(lambdas: Vec<f64>, densities: Vec<f64>, origin_atom: f64) -> Result<Self> {
        if lambdas.len() != densities.len() || lambdas.len() < 2 {
            return Err(Error::Empty("density grid needs two or more matching points"));
        }
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) || lambdas[0] < 0.0 {
            return Err(Error::InvalidParameter {
                name: "lambdas",
                value: lambdas[0],
                reason: "grid must be nonnegative and strictly increasing",
            });
        }
        if let Some(&d) = densities.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(Error::NonFinite {
                context: "density",
                value: d,
            });
        }
        let mass_estimate = trapezoid(&lambdas, &densities);
        Ok(Self {
            lambdas,
            densities,
            mass_estimate,
            origin_atom,
        })
    }

    /// Trapezoid weights per grid point.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let n = self.lambdas.len();
        let mut w = alloc::vec![0.0; n];
        for i in 0..n - 1 {
            let half = 0.5 * (self.lambdas[i + 1] - self.lambdas[i]);
            w[i] += half * self.densities[i];
            w[i + 1] += half * self.densities[i + 1];
        }
        w
    }

    /// As [`SpectralMeasure::resize`]: the continuous part is rescaled by
    /// `from_dim / to_dim` and the origin atom takes up the difference.
    pub fn resize(&self, from_dim: f64, to_dim: f64) -> Result<Self> {
        let ratio = from_dim / to_dim;
        if !(ratio > 0.0) || !ratio.is_finite() {
            return Err(Error::InvalidParameter {
                name: "to_dim",
                value: to_dim,
                reason: "dimensions must be positive",
            });
        }
        let origin = 1.0 - (1.0 - self.origin_atom) * ratio;
        if origin < -1e-9 {
            return Err(Error::InvalidParameter {
                name: "to_dim",
                value: to_dim,
                reason: "too few dimensions to hold the nonzero spectrum",
            });
        }
        let densities = self.densities.iter().map(|d| d * ratio).collect();
        Self::new(self.lambdas.clone(), densities, origin.max(0.0))
    }

    /// Linear interpolation, zero outside the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        let l = &self.lambdas;
        if x < l[0] || x > l[l.len() - 1] {
            return 0.0;
        }
        let i = l.partition_point(|&v| v <= x).saturating_sub(1).min(l.len() - 2);
        let t = (x - l[i]) / (l[i + 1] - l[i]);
        self.densities[i] * (1.0 - t) + self.densities[i + 1] * t
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Sorted eigenvalues of one finite-size realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSpectrum {
    pub eigenvalues: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub label: String,
}

impl EmpiricalSpectrum {
    /// Sorts and clamps round-off negatives; rejects genuinely negative values.
    pub fn new(mut eigenvalues: Vec<f64>, seed: u64, label: impl Into<String>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Empty("spectrum"));
        }
        for e in &mut eigenvalues {
            if !e.is_finite() {
                return Err(Error::NonFinite {
                    context: "eigenvalue",
                    value: *e,
                });
            }
            if *e < EIGEN_CLAMP {
                return Err(Error::NegativeEigenvalue(*e));
            }
            *e = e.max(0.0);
        }
        eigenvalues.sort_by(f64::total_cmp);
        Ok(Self {
            n: eigenvalues.len(),
            eigenvalues,
            seed,
            label: label.into(),
        })
    }

    pub fn ncm(&self) -> Result<SpectralMeasure> {
        ncm_from_eigenvalues(&self.eigenvalues)
    }

    pub fn mean(&self) -> f64 {
        self.eigenvalues.iter().sum::<f64>() / self.n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn ncm_trivial_cases() {
        let m = ncm_from_eigenvalues(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.atoms(), &[(1.0, 1.0)]);
        let m = ncm_from_eigenvalues(&[0.0, 4.0]).unwrap();
        assert_eq!(m.atoms(), &[(0.0, 0.5), (4.0, 0.5)]);
        assert_eq!(m.moment(1), 2.0);
        assert_eq!(m.moment(2), 8.0);
    }

    #[test]
    fn ncm_rejects_bad_input() {
        assert!(matches!(ncm_from_eigenvalues(&[]), Err(Error::Empty(_))));
        assert!(matches!(
            ncm_from_eigenvalues(&[1.0, -1e-6]),
            Err(Error::NegativeEigenvalue(_))
        ));
        let m = ncm_from_eigenvalues(&[-1e-12, 2.0]).unwrap();
        assert_eq!(m.atoms()[0], (0.0, 0.5));
    }

    #[test]
    fn merge_within_relative_tolerance() {
        let m = SpectralMeasure::from_atoms([(1.0, 1.0), (1.0 + 1e-14, 1.0), (2.0, 2.0)]).unwrap();
        assert_eq!(m.len(), 2);
        assert!(close(m.atoms()[0].1, 0.5, 1e-15));
    }

    #[test]
    fn stieltjes_diracs() {
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let f = d1.stieltjes(Complex64::new(-1.0, 0.0)).unwrap();
        assert!(close(f.re, 0.5, 1e-15) && f.im == 0.0);
        let d0 = SpectralMeasure::dirac(0.0).unwrap();
        let f = d0.stieltjes(Complex64::new(-3.0, 0.0)).unwrap();
        assert!(close(f.re, 1.0 / 3.0, 1e-15));
        assert!(matches!(
            d1.stieltjes(Complex64::new(1.0, 0.0)),
            Err(Error::OnSupport { .. })
        ));
    }

    #[test]
    fn ks_trivial_cases() {
        let d0 = SpectralMeasure::dirac(0.0).unwrap();
        let d1 = SpectralMeasure::dirac(1.0).unwrap();
        let half = SpectralMeasure::from_atoms([(0.0, 0.5), (1.0, 0.5)]).unwrap();
        assert_eq!(ks_distance(&half, &half), 0.0);
        assert_eq!(ks_distance(&d0, &d1), 1.0);
        assert_eq!(ks_distance(&d1, &half), 0.5);
    }

    #[test]
    fn mp_reference_moments_and_transform() {
        let mp = mp_reference(1.0).unwrap();
        assert!(mp.len() >= 2000);
        assert!(close(mp.moment(1), 1.0, 1e-12));
        assert!(close(mp.moment(2), 2.0, 1e-6));
        assert!(close(mp.moment(3), 5.0, 1e-6));
        let f = mp.stieltjes(Complex64::new(-1.0, 0.0)).unwrap();
        assert!(close(f.re, (libm::sqrt(5.0) - 1.0) / 2.0, 1e-4));
        assert!(mp.max_location() < 4.0 && mp.atoms()[0].0 > 0.0);
    }

    #[test]
    fn mp_reference_rank_deficient() {
        let mp = mp_reference(4.0).unwrap();
        assert!(close(mp.mass_at_zero(), 0.75, 1e-12));
        assert!(close(mp.moment(1), 1.0, 1e-10));
        // Second moment of MP(c) with unit mean is 1 + c.
        assert!(close(mp.moment(2), 5.0, 1e-8));
        assert!(mp_reference(0.0).is_err());
        assert!(mp_reference(-1.0).is_err());
    }

    #[test]
    fn resize_moves_zero_mass_only() {
        let m = SpectralMeasure::from_atoms([(0.0, 0.5), (2.0, 0.5)]).unwrap();
        let big = m.resize(2.0, 4.0).unwrap();
        assert_eq!(big.atoms(), &[(0.0, 0.75), (2.0, 0.25)]);
        let back = big.resize(4.0, 2.0).unwrap();
        assert!(ks_distance(&back, &m) < 1e-15);
        assert!(m.resize(2.0, 0.5).is_err());
    }

    #[test]
    fn density_grid_interpolates() {
        let g = DensityGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(g.mass_estimate, 1.0);
        assert_eq!(g.density_at(0.5), 0.5);
        assert_eq!(g.density_at(3.0), 0.0);
        assert_eq!(g.trapezoid_weights(), vec![0.0, 1.0, 0.0]);
        assert!(DensityGrid::new(vec![1.0, 1.0], vec![0.0, 0.0], 0.0).is_err());
    }
}
