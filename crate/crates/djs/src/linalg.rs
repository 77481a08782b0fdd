//! Dense linear algebra on top of `faer`.

use faer::{Mat, MatRef, Side};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Lanczos steps used for the largest singular value.
pub const LANCZOS_STEPS: usize = 80;

/// `rows x cols` matrix of standard Gaussians, filled column by column.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Squared singular values in ascending order.
pub fn squared_singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>, String> {
    let s = m.singular_values().map_err(|e| format!("{e:?}"))?;
    let mut out: Vec<f64> = s.into_iter().map(|v| v * v).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Largest singular value by Lanczos on `m^T m` with full
/// reorthogonalization, started from a fixed vector.
pub fn top_singular_value(m: MatRef<'_, f64>, steps: usize) -> Result<f64, String> {
    let n = m.ncols();
    let steps = steps.min(n).max(1);
    let mut basis: Vec<Mat<f64>> = Vec::with_capacity(steps);
    let mut alpha = Vec::with_capacity(steps);
    let mut beta: Vec<f64> = Vec::with_capacity(steps);
    let mut v = Mat::<f64>::from_fn(n, 1, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    let norm = v.norm_l2();
    v /= faer::Scale(norm);
    for j in 0..steps {
        let mut w = m.transpose() * (m * &v);
        let a = (v.transpose() * &w)[(0, 0)];
        alpha.push(a);
        w -= faer::Scale(a) * &v;
        if j > 0 {
            w -= faer::Scale(beta[j - 1]) * &basis[j - 1];
        }
        for b in basis.iter().chain(std::iter::once(&v)) {
            let c = (b.transpose() * &w)[(0, 0)];
            w -= faer::Scale(c) * b;
        }
        let b = w.norm_l2();
        basis.push(v);
        if b < 1e-12 * a.abs().max(1.0) || j + 1 == steps {
            break;
        }
        beta.push(b);
        v = w / faer::Scale(b);
    }
    let k = alpha.len();
    let t = Mat::<f64>::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i.abs_diff(j) == 1 {
            beta[i.min(j)]
        } else {
            0.0
        }
    });
    let evals = t.self_adjoint_eigenvalues(Side::Lower).map_err(|e| format!("{e:?}"))?;
    let top = evals.into_iter().fold(0.0f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Role};

    #[test]
    fn lanczos_matches_full_svd() {
        let m = gaussian_matrix(120, 100, &mut stream(3, 0, 0, Role::Weights));
        let full = squared_singular_values(m.as_ref()).unwrap();
        let top = top_singular_value(m.as_ref(), LANCZOS_STEPS).unwrap();
        let expect = full.last().unwrap().sqrt();
        assert!((top - expect).abs() < 1e-8 * expect, "{top} vs {expect}");
    }

    #[test]
    fn singular_values_of_diagonal() {
        let m = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { [3.0, -1.0, 2.0][i] } else { 0.0 });
        assert_eq!(squared_singular_values(m.as_ref()).unwrap(), vec![1.0, 4.0, 9.0]);
    }
}
