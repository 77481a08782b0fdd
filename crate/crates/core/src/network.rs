use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::activations::{q_fixed_point, Activation, QRecurrence, FIXED_POINT_TOL};
use crate::error::{Error, Result};

/// How the network input `x^0` is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InputMode {
    /// A fixed input vector of length `n_0`.
    Explicit { x0: Vec<f64> },
    /// i.i.d. standard Gaussian entries, drawn from the input stream.
    IidUnit,
    /// Constant input with `n^-1 |x^0|^2 + sigma_b^2 = q1`.
    Q1Target { q1: f64 },
    /// As `Q1Target` with `q1` the fixed point of the depth recurrence.
    FixedPoint,
}

/// Depth, widths and randomness of a Gaussian feed-forward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// `n_0, ..., n_L`.
    pub widths: Vec<usize>,
    pub sigma_b2: f64,
    pub activation: Activation,
    pub input: InputMode,
    pub seed: u64,
    pub recurrence: QRecurrence,
}

impl Default for NetworkConfig {
    /// Two tanh layers of width 256 at the fixed point for `sigma_b^2 = 0.05`.
    fn default() -> Self {
        Self::square(2, 256, Activation::Tanh, 0.05, InputMode::FixedPoint, 0)
    }
}

impl NetworkConfig {
    /// Equal-width network of depth `depth`.
    pub fn square(depth: usize, n: usize, activation: Activation, sigma_b2: f64, input: InputMode, seed: u64) -> Self {
        Self {
            widths: alloc::vec![n; depth + 1],
            sigma_b2,
            activation,
            input,
            seed,
            recurrence: QRecurrence::WithBias,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len().saturating_sub(1)
    }

    pub fn is_square(&self) -> bool {
        self.widths.windows(2).all(|w| w[0] == w[1])
    }

    /// `n_{l-1} / n_l` for `l = 1..L`.
    pub fn aspect_ratios(&self) -> Vec<f64> {
        self.widths.windows(2).map(|w| w[0] as f64 / w[1] as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth() < 1 {
            return Err(Error::InvalidConfig("depth L must be at least 1".into()));
        }
        if let Some(n) = self.widths.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidConfig(format!("width {n} is below 2")));
        }
        if !(self.sigma_b2 >= 0.0) || !self.sigma_b2.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma_b2 = {} must be nonnegative",
                self.sigma_b2
            )));
        }
        match &self.input {
            InputMode::Explicit { x0 } if x0.len() != self.widths[0] => Err(Error::InvalidConfig(format!(
                "explicit input has length {} but n_0 = {}",
                x0.len(),
                self.widths[0]
            ))),
            InputMode::Explicit { x0 } if x0.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidConfig("explicit input is not finite".into()))
            }
            InputMode::Q1Target { q1 } if !(*q1 >= self.sigma_b2) || !q1.is_finite() => Err(Error::InvalidConfig(
                format!("q1 = {q1} must be at least sigma_b2 = {}", self.sigma_b2),
            )),
            _ => Ok(()),
        }
    }

    /// The limiting `q^1 = lim n^-1 |x^0|^2 + sigma_b^2` implied by the input mode.
    pub fn q1(&self) -> Result<f64> {
        match &self.input {
            InputMode::Explicit { x0 } => Ok(x0.iter().map(|v| v * v).sum::<f64>() / x0.len() as f64 + self.sigma_b2),
            InputMode::IidUnit => Ok(1.0 + self.sigma_b2),
            InputMode::Q1Target { q1 } => Ok(*q1),
            InputMode::FixedPoint => q_fixed_point(&self.activation, self.sigma_b2, FIXED_POINT_TOL, self.recurrence),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = NetworkConfig::square(2, 16, Activation::Tanh, 0.1, InputMode::IidUnit, 1);
        assert!(c.validate().is_ok());
        assert_eq!(c.depth(), 2);
        assert!((c.q1().unwrap() - 1.1).abs() < 1e-15);
        c.widths = alloc::vec![16];
        assert!(c.validate().is_err());
        c.widths = alloc::vec![16, 1];
        assert!(c.validate().is_err());
        c.widths = alloc::vec![4, 4];
        c.input = InputMode::Explicit {
            x0: alloc::vec![1.0; 3],
        };
        assert!(c.validate().is_err());
        c.input = InputMode::Explicit {
            x0: alloc::vec![2.0; 4],
        };
        assert!((c.q1().unwrap() - 4.1).abs() < 1e-15);
    }
}
