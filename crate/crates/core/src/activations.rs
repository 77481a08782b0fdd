//! Nonlinearities, Gaussian expectations and the per-layer laws `nu_K`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::SpectralMeasure;
use crate::quadrature::GaussianRule;

/// Default Gauss-Hermite order.
pub const DEFAULT_ORDER: usize = 201;
pub const FIXED_POINT_DAMPING: f64 = 0.5;
pub const FIXED_POINT_MAX_ITER: usize = 10_000;
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Slack used when checking `q` against `(sigma_b^2, Phi0^2 + sigma_b^2]`.
const Q_SLACK: f64 = 1e-12;

/// A piecewise differentiable nonlinearity `phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    /// `clamp(x, -1, 1)`.
    HardTanh,
    /// `erf(sqrt(pi) x / 2)`, unit slope at the origin.
    Erf,
    /// `scale * tanh(slope * x + shift)`.
    ScaledShiftedTanh {
        scale: f64,
        slope: f64,
        shift: f64,
    },
    /// Linear interpolation between knots, constant beyond the end knots.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    /// Unbounded; only for exploration, outside every guarantee.
    Relu,
}

impl Activation {
    /// Built-in activations by name. `relu` requires `allow_unbounded`.
    pub fn from_name(name: &str, allow_unbounded: bool) -> Result<Self> {
        match name {
            "tanh" => Ok(Self::Tanh),
            "hard-tanh" | "hardtanh" => Ok(Self::HardTanh),
            "erf" => Ok(Self::Erf),
            "scaled-shifted-tanh" => Ok(Self::ScaledShiftedTanh {
                scale: 1.7159,
                slope: 2.0 / 3.0,
                shift: 0.25,
            }),
            "relu" if allow_unbounded => Ok(Self::Relu),
            _ => Err(Error::UnknownActivation(name.to_string())),
        }
    }

    /// Piecewise-linear activation through `knots`, sorted by abscissa.
    pub fn piecewise_linear(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidConfig(
                "piecewise-linear activation needs two or more knots".to_string(),
            ));
        }
        if knots.iter().any(|k| !k.0.is_finite() || !k.1.is_finite()) {
            return Err(Error::InvalidConfig("non-finite knot".to_string()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidConfig("duplicate knot abscissa".to_string()));
        }
        let act = Self::PiecewiseLinear { knots };
        if act.dphi_bound() == 0.0 {
            return Err(Error::InvalidConfig(
                "piecewise-linear activation is constant".to_string(),
            ));
        }
        Ok(act)
    }

    pub fn name(&self) -> String {
        match self {
            Self::Tanh => "tanh".into(),
            Self::HardTanh => "hard-tanh".into(),
            Self::Erf => "erf".into(),
            Self::ScaledShiftedTanh { .. } => "scaled-shifted-tanh".into(),
            Self::PiecewiseLinear { .. } => "piecewise-linear".into(),
            Self::Relu => "relu".into(),
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        match self {
            Self::Tanh => libm::tanh(x),
            Self::HardTanh => x.clamp(-1.0, 1.0),
            Self::Erf => libm::erf(x * libm::sqrt(core::f64::consts::PI) / 2.0),
            Self::ScaledShiftedTanh { scale, slope, shift } => scale * libm::tanh(slope * x + shift),
            Self::PiecewiseLinear { knots } => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let i = knots.partition_point(|k| k.0 <= x) - 1;
                let (a, b) = (knots[i], knots[i + 1]);
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
            Self::Relu => x.max(0.0),
        }
    }

    /// `phi'`, right-continuous at breakpoints.
    pub fn dphi(&self, x: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = libm::tanh(x);
                1.0 - t * t
            }
            Self::HardTanh => {
                if x.abs() < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Erf => libm::exp(-core::f64::consts::PI * x * x / 4.0),
            Self::ScaledShiftedTanh { scale, slope, shift } => {
                let t = libm::tanh(slope * x + shift);
                scale * slope * (1.0 - t * t)
            }
            Self::PiecewiseLinear { knots } => {
                let (first, last) = (knots[0], knots[knots.len() - 1]);
                if x < first.0 || x >= last.0 {
                    return 0.0;
                }
                let i = knots.partition_point(|k| k.0 <= x) - 1;
                let (a, b) = (knots[i], knots[i + 1]);
                (b.1 - a.1) / (b.0 - a.0)
            }
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `Phi0 = sup |phi|`.
    pub fn phi_bound(&self) -> f64 {
        match self {
            Self::Tanh | Self::HardTanh | Self::Erf => 1.0,
            Self::ScaledShiftedTanh { scale, .. } => scale.abs(),
            Self::PiecewiseLinear { knots } => knots.iter().fold(0.0, |m, k| k.1.abs().max(m)),
            Self::Relu => f64::INFINITY,
        }
    }

    /// `Phi1 = sup |phi'|`.
    pub fn dphi_bound(&self) -> f64 {
        match self {
            Self::Tanh | Self::HardTanh | Self::Erf | Self::Relu => 1.0,
            Self::ScaledShiftedTanh { scale, slope, .. } => (scale * slope).abs(),
            Self::PiecewiseLinear { knots } => knots
                .windows(2)
                .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
                .fold(0.0, f64::max),
        }
    }

    /// Points where `phi'` jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::HardTanh => alloc::vec![-1.0, 1.0],
            Self::PiecewiseLinear { knots } => knots.iter().map(|k| k.0).collect(),
            Self::Relu => alloc::vec![0.0],
            _ => Vec::new(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.phi_bound().is_finite()
    }

    fn rule(&self, q: f64, order: usize) -> Result<GaussianRule> {
        scaled_rule(q, order, &self.breakpoints())
    }
}

/// Panels no wider than `X_PANEL` in `x = sqrt(q) g`. The built-in smooth
/// activations have their nearest complex singularity at distance `pi / 2`
/// or more, so ten-node panels of this width are accurate to round-off.
const X_PANEL: f64 = 1.5;

fn scaled_rule(q: f64, order: usize, breakpoints: &[f64]) -> Result<GaussianRule> {
    let sq = libm::sqrt(q);
    let splits: Vec<f64> = breakpoints.iter().map(|b| b / sq).collect();
    GaussianRule::panels(order, &splits, X_PANEL / sq)
}

/// `E f(sqrt(q) g)` for standard Gaussian `g`, by composite Gauss-Legendre
/// panels scaled to `sqrt(q)`. Jumps of `f` at `breakpoints` (in `x`-space)
/// are honored by splitting the integration domain.
pub fn gauss_expect(f: impl Fn(f64) -> f64, q: f64, order: usize, breakpoints: &[f64]) -> Result<f64> {
    check_q(q)?;
    let sq = libm::sqrt(q);
    scaled_rule(q, order, breakpoints)?.expect(|g| f(sq * g))
}

/// `E phi'(sqrt(q) g)^2`, the mean of `nu_K`.
pub fn mean_dphi_sq(act: &Activation, q: f64, order: usize) -> Result<f64> {
    check_q(q)?;
    let sq = libm::sqrt(q);
    act.rule(q, order)?.expect(|g| {
        let d = act.dphi(sq * g);
        d * d
    })
}

/// `E phi(sqrt(q) g)^2`.
pub fn mean_phi_sq(act: &Activation, q: f64, order: usize) -> Result<f64> {
    if q == 0.0 {
        let p = act.phi(0.0);
        return Ok(p * p);
    }
    check_q(q)?;
    let sq = libm::sqrt(q);
    act.rule(q, order)?.expect(|g| {
        let p = act.phi(sq * g);
        p * p
    })
}

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter {
            name: "q",
            value: q,
            reason: "variance must be positive and finite",
        });
    }
    Ok(())
}

/// Which form of the depth recurrence to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QRecurrence {
    /// `q^l = E phi^2(sqrt(q^{l-1}) g) + sigma_b^2`.
    #[default]
    WithBias,
    /// `q^l = E phi^2(sqrt(q^{l-1}) g)`.
    WithoutBias,
}

impl QRecurrence {
    /// The bias variance added to `E phi^2` at each layer.
    pub fn offset(self, sigma_b2: f64) -> f64 {
        match self {
            Self::WithBias => sigma_b2,
            Self::WithoutBias => 0.0,
        }
    }
}

/// `q^1, ..., q^L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSchedule {
    pub q: Vec<f64>,
    pub sigma_b2: f64,
    pub source_q1: f64,
    #[serde(default)]
    pub recurrence: QRecurrence,
}

/// Iterates the depth recurrence without range checks; `q1` may be zero.
pub fn q_recurrence_values(
    q1: f64,
    depth: usize,
    act: &Activation,
    sigma_b2: f64,
    recurrence: QRecurrence,
    order: usize,
) -> Result<Vec<f64>> {
    let mut q = Vec::with_capacity(depth);
    let mut cur = q1;
    for l in 0..depth {
        if l > 0 {
            cur = mean_phi_sq(act, cur, order)? + recurrence.offset(sigma_b2);
        }
        if !cur.is_finite() || cur < 0.0 {
            return Err(Error::QOutOfRange { layer: l + 1, q: cur });
        }
        q.push(cur);
    }
    Ok(q)
}

/// The schedule `q^1..q^L` started at `q1`, with every entry checked against
/// `(offset, Phi0^2 + offset]`.
pub fn q_schedule(
    q1: f64,
    depth: usize,
    act: &Activation,
    sigma_b2: f64,
    recurrence: QRecurrence,
) -> Result<QSchedule> {
    if depth < 1 {
        return Err(Error::InvalidParameter {
            name: "L",
            value: depth as f64,
            reason: "depth must be at least 1",
        });
    }
    if !(sigma_b2 >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_b2",
            value: sigma_b2,
            reason: "bias variance must be nonnegative",
        });
    }
    if !(q1 > sigma_b2) || !q1.is_finite() {
        return Err(Error::InvalidParameter {
            name: "q1",
            value: q1,
            reason: "q1 must exceed sigma_b^2",
        });
    }
    let q = q_recurrence_values(q1, depth, act, sigma_b2, recurrence, DEFAULT_ORDER)?;
    let offset = recurrence.offset(sigma_b2);
    let upper = act.phi_bound() * act.phi_bound() + offset;
    for (l, &v) in q.iter().enumerate().skip(1) {
        if !(v > offset) || v > upper * (1.0 + Q_SLACK) {
            return Err(Error::QOutOfRange { layer: l + 1, q: v });
        }
    }
    Ok(QSchedule {
        q,
        sigma_b2,
        source_q1: q1,
        recurrence,
    })
}

/// Fixed point of the depth recurrence, by damped iteration started at
/// `Phi0^2 + sigma_b^2`. Each step also tries a Newton step on the residual
/// and keeps it when it lowers the residual, which handles the slow
/// algebraic approach to a fixed point at the boundary (e.g. `q* = 0`).
pub fn q_fixed_point(act: &Activation, sigma_b2: f64, tol: f64, recurrence: QRecurrence) -> Result<f64> {
    q_fixed_point_from(act, sigma_b2, tol, recurrence, None)
}

pub fn q_fixed_point_from(
    act: &Activation,
    sigma_b2: f64,
    tol: f64,
    recurrence: QRecurrence,
    start: Option<f64>,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            value: tol,
            reason: "tolerance must be positive",
        });
    }
    if !(sigma_b2 >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma_b2",
            value: sigma_b2,
            reason: "bias variance must be nonnegative",
        });
    }
    let offset = recurrence.offset(sigma_b2);
    let map = |q: f64| -> Result<f64> { Ok(mean_phi_sq(act, q, DEFAULT_ORDER)? + offset) };
    let mut q = start.unwrap_or(if act.is_bounded() {
        act.phi_bound() * act.phi_bound() + offset
    } else {
        1.0 + offset
    });
    let mut residual = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let fq = map(q)?;
        residual = (fq - q).abs();
        if residual < tol {
            return Ok(q);
        }
        let damped = q + FIXED_POINT_DAMPING * (fq - q);
        let mut next = damped;
        if q > 0.0 {
            let slope = map_derivative(act, q)?;
            if (slope - 1.0).abs() > 1e-300 {
                let newton = q - (fq - q) / (slope - 1.0);
                if newton >= 0.0 && newton.is_finite() {
                    let r_newton = (map(newton)? - newton).abs();
                    let r_damped = (map(damped)? - damped).abs();
                    if r_newton < r_damped {
                        next = newton;
                    }
                }
            }
        }
        q = next;
    }
    Err(Error::NoConvergence {
        what: "q fixed point",
        iterations: FIXED_POINT_MAX_ITER,
        residual,
    })
}

/// `d/dq E phi^2(sqrt(q) g) = E[phi(x) phi'(x) x] / q` with `x = sqrt(q) g`.
fn map_derivative(act: &Activation, q: f64) -> Result<f64> {
    let sq = libm::sqrt(q);
    act.rule(q, DEFAULT_ORDER)?.expect(|g| {
        let x = sq * g;
        act.phi(x) * act.dphi(x) * g / sq
    })
}

/// Law of `phi'(sqrt(q) g)^2` on the quadrature nodes of [`mean_dphi_sq`].
pub fn nu_k(act: &Activation, q: f64, order: usize) -> Result<SpectralMeasure> {
    check_q(q)?;
    let sq = libm::sqrt(q);
    let rule = act.rule(q, order)?;
    let mut atoms = Vec::with_capacity(rule.nodes.len());
    for (&g, &w) in rule.nodes.iter().zip(&rule.weights) {
        let d = act.dphi(sq * g);
        let v = d * d;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "phi' at a quadrature node",
                value: v,
            });
        }
        atoms.push((v, w));
    }
    let measure = SpectralMeasure::from_atoms(atoms)?;
    if measure.max_location() == 0.0 {
        return Err(Error::DegenerateDerivative(q));
    }
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::normal_cdf;

    #[test]
    fn gauss_expect_trivial() {
        let v = gauss_expect(|x| x * x, 2.0, DEFAULT_ORDER, &[]).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = gauss_expect(|_| 1.0, 0.3, DEFAULT_ORDER, &[]).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        assert!(gauss_expect(|x| x, 1.0, 1, &[]).is_err());
        assert!(gauss_expect(|x| 1.0 / (x - x), 1.0, 10, &[]).is_err());
    }

    #[test]
    fn schedule_depth_one_and_bounds() {
        let s = q_schedule(0.7, 1, &Activation::Tanh, 0.1, QRecurrence::WithBias).unwrap();
        assert_eq!(s.q, alloc::vec![0.7]);
        let s = q_schedule(5.0, 6, &Activation::HardTanh, 0.1, QRecurrence::WithBias).unwrap();
        assert!(s.q.iter().skip(1).all(|&q| q > 0.1 && q <= 1.1));
        assert!(q_schedule(0.1, 3, &Activation::Tanh, 0.1, QRecurrence::WithBias).is_err());
        assert!(q_schedule(1.0, 0, &Activation::Tanh, 0.1, QRecurrence::WithBias).is_err());
    }

    #[test]
    fn without_bias_switch_drops_offset() {
        let a = q_schedule(1.0, 2, &Activation::Tanh, 0.2, QRecurrence::WithBias).unwrap();
        let b = q_schedule(1.0, 2, &Activation::Tanh, 0.2, QRecurrence::WithoutBias).unwrap();
        assert!((a.q[1] - b.q[1] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn fixed_point_of_constant_square() {
        // phi^2 = 1 away from a 2e-9 wide ramp.
        let step = Activation::piecewise_linear(alloc::vec![(-1e-9, -1.0), (1e-9, 1.0)]).unwrap();
        let q = q_fixed_point(&step, 0.3, 1e-10, QRecurrence::WithBias).unwrap();
        assert!((q - 1.3).abs() < 1e-6, "{q}");
    }

    #[test]
    fn nu_k_hard_tanh_matches_normal_cdf() {
        for q in [0.3, 1.0, 2.5] {
            let nu = nu_k(&Activation::HardTanh, q, DEFAULT_ORDER).unwrap();
            assert_eq!(nu.len(), 2);
            let p = 2.0 * normal_cdf(1.0 / libm::sqrt(q)) - 1.0;
            assert!((nu.atoms()[1].1 - p).abs() < 1e-8);
            assert_eq!(nu.atoms()[1].0, 1.0);
        }
    }

    #[test]
    fn nu_k_first_moment_is_mean_dphi_sq() {
        for act in [Activation::Tanh, Activation::HardTanh, Activation::Erf] {
            let nu = nu_k(&act, 0.8, DEFAULT_ORDER).unwrap();
            let m = mean_dphi_sq(&act, 0.8, DEFAULT_ORDER).unwrap();
            assert!((nu.moment(1) - m).abs() < 1e-14);
        }
    }

    #[test]
    fn nu_k_rejects_dead_derivative() {
        let flat = Activation::piecewise_linear(alloc::vec![(100.0, 0.0), (101.0, 1.0)]).unwrap();
        assert!(matches!(
            nu_k(&flat, 1.0, DEFAULT_ORDER),
            Err(Error::DegenerateDerivative(_))
        ));
    }

    #[test]
    fn unknown_names_and_unbounded_gate() {
        assert!(Activation::from_name("relu", false).is_err());
        assert!(Activation::from_name("relu", true).is_ok());
        assert!(Activation::from_name("softplus", true).is_err());
        assert_eq!(Activation::from_name("hard-tanh", false).unwrap(), Activation::HardTanh);
    }
}
