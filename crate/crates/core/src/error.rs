use alloc::string::String;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("eigenvalue {0} is below the clamp threshold; the matrix is not positive semi-definite")]
    NegativeEigenvalue(f64),

    #[error("invalid atom ({location}, {weight})")]
    InvalidAtom { location: f64, weight: f64 },

    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("spectral point {z} is within {distance:e} of the support")]
    OnSupport { z: Complex64, distance: f64 },

    #[error("non-finite value {value} while evaluating {context}")]
    NonFinite { context: &'static str, value: f64 },

    #[error("q recurrence left the admissible interval at layer {layer}: q = {q}")]
    QOutOfRange { layer: usize, q: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("phi' vanishes almost surely at q = {0}; nu_K is concentrated at 0")]
    DegenerateDerivative(f64),

    #[error("denominator below guard at z = {0}")]
    DivisionGuard(Complex64),

    #[error("no valid solution of the (h, k) system at lambda = {lambda} (residual {residual:e})")]
    InvalidSolution { lambda: f64, residual: f64 },

    #[error("target {target} is outside the monotone branch ({lower}, {upper})")]
    OutsideBranch { target: f64, lower: f64, upper: f64 },

    #[error("branch ambiguity while continuing the functional equation to z = {0}")]
    BranchAmbiguity(Complex64),

    #[error("unknown activation '{0}'")]
    UnknownActivation(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;
