//! Quadrature rules for expectations under the standard Gaussian.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};

/// Half-width of the window in which piecewise rules integrate; the Gaussian
/// mass outside `|g| > 12` is below `4e-33`.
pub const GAUSS_WINDOW: f64 = 12.0;

/// Nodes per Gauss-Legendre panel in the piecewise rule.
const PANEL_NODES: usize = 10;

/// Gauss-Hermite nodes and weights for the weight `exp(-x^2)`, by the
/// Golub-Welsch eigenvalue method on the Jacobi matrix of the Hermite
/// recurrence.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::InvalidParameter {
            name: "order",
            value: n as f64,
            reason: "quadrature order must be at least 2",
        });
    }
    let diag = alloc::vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|i| libm::sqrt(i as f64 / 2.0)).collect();
    let (mut nodes, first) = tridiagonal_eigen(diag, off)?;
    let mu0 = libm::sqrt(PI);
    let mut pairs: Vec<(f64, f64)> = nodes.drain(..).zip(first).map(|(x, v)| (x, mu0 * v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Symmetrize away round-off.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Ok(pairs.into_iter().unzip())
}

/// Eigenvalues of a symmetric tridiagonal matrix and the first component of
/// each normalized eigenvector (implicit QL with Wilkinson shifts).
fn tridiagonal_eigen(mut d: Vec<f64>, off: Vec<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    let mut z = alloc::vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::NoConvergence {
                    what: "tridiagonal eigenvalues",
                    iterations: iter,
                    residual: e[l],
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = libm::hypot(g, 1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = libm::hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok((d, z))
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 {
        return Err(Error::InvalidParameter {
            name: "order",
            value: 0.0,
            reason: "Gauss-Legendre needs at least one node",
        });
    }
    let mut x = alloc::vec![0.0; n];
    let mut w = alloc::vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = libm::cos(PI * (i as f64 + 0.75) / (nf + 0.5));
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

/// Nodes `g_i` and weights `w_i` with `sum w_i f(g_i) ~ E f(g)`, `g ~ N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussianRule {
    /// Plain Gauss-Hermite rule when `splits` is empty, otherwise the
    /// piecewise rule of [`GaussianRule::panels`] with no width cap.
    pub fn new(order: usize, splits: &[f64]) -> Result<Self> {
        check_order(order)?;
        if !splits.iter().any(|s| s.is_finite() && s.abs() < GAUSS_WINDOW) {
            let (x, w) = gauss_hermite(order)?;
            let scale = 1.0 / libm::sqrt(PI);
            return Ok(Self {
                nodes: x.iter().map(|v| v * core::f64::consts::SQRT_2).collect(),
                weights: w.iter().map(|v| v * scale).collect(),
            });
        }
        Self::panels(order, splits, f64::INFINITY)
    }

    /// Composite Gauss-Legendre panels on `[-GAUSS_WINDOW, GAUSS_WINDOW]`
    /// cut at every split point, so that integrands with jumps at the splits
    /// are integrated piece by piece. `order` sets the node budget; panels
    /// are additionally kept narrower than `max_width`, which lets integrands
    /// that vary on a short scale converge geometrically.
    pub fn panels(order: usize, splits: &[f64], max_width: f64) -> Result<Self> {
        check_order(order)?;
        if !(max_width > 0.0) {
            return Err(Error::InvalidParameter {
                name: "max_width",
                value: max_width,
                reason: "panel width must be positive",
            });
        }
        let mut cuts: Vec<f64> = splits
            .iter()
            .copied()
            .filter(|s| s.is_finite() && s.abs() < GAUSS_WINDOW)
            .collect();
        cuts.push(-GAUSS_WINDOW);
        cuts.push(GAUSS_WINDOW);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        let panels_total = (order / PANEL_NODES).max(cuts.len() - 1);
        let max_width = (2.0 * GAUSS_WINDOW / panels_total as f64).min(max_width);
        let (gx, gw) = gauss_legendre(PANEL_NODES)?;
        let mut nodes = Vec::with_capacity(order + PANEL_NODES * cuts.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for seg in cuts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let panels = libm::ceil((b - a) / max_width).max(1.0) as usize;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * h;
                for (t, wt) in gx.iter().zip(&gw) {
                    let g = lo + 0.5 * h * (t + 1.0);
                    nodes.push(g);
                    weights.push(0.5 * h * wt * gaussian_pdf(g));
                }
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { nodes, weights })
    }

    pub fn expect(&self, mut f: impl FnMut(f64) -> f64) -> Result<f64> {
        let mut acc = 0.0;
        for (&g, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(g);
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: "integrand at a quadrature node",
                    value: v,
                });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 {
        return Err(Error::InvalidParameter {
            name: "order",
            value: order as f64,
            reason: "quadrature order must be at least 2",
        });
    }
    Ok(())
}

pub fn gaussian_pdf(g: f64) -> f64 {
    libm::exp(-0.5 * g * g) / libm::sqrt(2.0 * PI)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_integrates_polynomials() {
        for n in [2usize, 5, 20, 201] {
            let rule = GaussianRule::new(n, &[]).unwrap();
            let s0 = rule.expect(|_| 1.0).unwrap();
            let s2 = rule.expect(|g| g * g).unwrap();
            assert!((s0 - 1.0).abs() < 1e-12, "n={n} mass {s0}");
            assert!((s2 - 1.0).abs() < 1e-12, "n={n} var {s2}");
            if n >= 3 {
                let s4 = rule.expect(|g| g * g * g * g).unwrap();
                assert!((s4 - 3.0).abs() < 1e-11, "n={n} m4 {s4}");
            }
        }
    }

    #[test]
    fn legendre_exact_for_low_degree() {
        let (x, w) = gauss_legendre(10).unwrap();
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn split_rule_handles_jumps() {
        let rule = GaussianRule::new(201, &[-0.7, 0.7]).unwrap();
        let p = rule.expect(|g| if g.abs() < 0.7 { 1.0 } else { 0.0 }).unwrap();
        let exact = 2.0 * normal_cdf(0.7) - 1.0;
        assert!((p - exact).abs() < 1e-13, "{p} vs {exact}");
    }

    #[test]
    fn order_below_two_is_rejected() {
        assert!(GaussianRule::new(1, &[]).is_err());
        assert!(GaussianRule::new(1, &[0.5]).is_err());
    }
}
