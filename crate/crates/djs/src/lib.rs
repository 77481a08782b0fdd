//! Monte Carlo validation, file formats and the command line for
//! deep-network Jacobian spectra.
//!
//! The numerics live in `djs_core`; this crate adds what needs `std`:
//! reproducible random streams ([`rng`]), dense linear algebra
//! ([`linalg`]), finite-width simulation ([`simulate`]), a worker pool
//! ([`parallel`]), file formats ([`io`]), configuration ([`config`]) and the
//! experiment driver ([`cli`]).

// `!(x > 0.0)` deliberately rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod rng;
pub mod simulate;

pub use djs_core;
pub use error::{Error, Result};
