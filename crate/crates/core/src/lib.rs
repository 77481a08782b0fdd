//! Limiting singular-value spectra of input-output Jacobians of deep random
//! networks.
//!
//! The spectrum of `J J^T` for a depth-`L` network with i.i.d. Gaussian
//! weights converges, as the widths grow, to a deterministic law obtained by
//! composing per-layer laws `nu_K` (the law of `phi'(sqrt(q) g)^2`) with a
//! Marchenko-Pastur factor. This crate holds the allocation-only numerical
//! core:
//!
//! * [`measures`]: weighted-atom probability measures, Stieltjes transforms,
//!   Kolmogorov-Smirnov distance and a discretized Marchenko-Pastur law.
//! * [`quadrature`] and [`activations`]: Gaussian expectations, the `q^l`
//!   recurrence and the per-layer laws `nu_K`.
//! * [`solver`]: the `(h, k)` fixed-point system, Stieltjes inversion and the
//!   binary composition [`solver::diamond`].
//! * [`stransform`]: moment generating functions, functional inverses,
//!   S-transforms and the equal-width functional equation.
//!
//! IO, Monte Carlo simulation and the command line live in the `djs` crate.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activations;
pub mod error;
pub mod measures;
pub mod network;
pub mod quadrature;
pub mod solver;
pub mod stransform;

pub use activations::{Activation, QRecurrence, QSchedule};
pub use error::{Error, Result};
pub use measures::{DensityGrid, EmpiricalSpectrum, SpectralMeasure};
pub use network::{InputMode, NetworkConfig};
pub use num_complex::Complex64;
pub use solver::{HkSolution, SolverConfig, TheorySpectrum};
pub use stransform::MomentSeries;
