//! Small dense symmetric linear algebra: cyclic Jacobi and friends.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, values descending; `vectors` holds one
/// eigenvector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigendecomposition with a fixed (row-major) sweep order.
/// Stops once the off-diagonal Frobenius norm falls below `1e-12` of the
/// full norm.
pub fn symmetric_eigen(matrix: &Array2<f64>) -> Result<SymmetricEigen> {
    let (n, m) = matrix.dim();
    if n != m {
        return Err(Error::DimensionMismatch(format!("{n}×{m} is not square")));
    }
    let mut a: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            a.push(0.5 * (matrix[[i, j]] + matrix[[j, i]]));
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if total == 0.0 || n == 1 {
        return Ok(sorted(n, &a, v));
    }

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += 2.0 * a[i * n + j] * a[i * n + j];
            }
        }
        if off.sqrt() <= JACOBI_TOL * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    Ok(sorted(n, &a, v))
}

fn sorted(n: usize, a: &[f64], v: Vec<f64>) -> SymmetricEigen {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| a[i * n + i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| v[r * n + order[c]]);
    SymmetricEigen { values, vectors }
}

/// `A^{-1/2}` of a symmetric positive definite matrix.
pub fn inv_sqrt_spd(matrix: &Array2<f64>) -> Result<Array2<f64>> {
    let eig = symmetric_eigen(matrix)?;
    let max = eig.values.iter().cloned().fold(0.0, f64::max);
    let min = eig.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= max * 1e-14 {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = eig.values.mapv(|l| 1.0 / l.sqrt());
    let scaled = &eig.vectors * &scale;
    Ok(scaled.dot(&eig.vectors.t()))
}

pub fn is_symmetric(matrix: &Array2<f64>, tol: f64) -> bool {
    let (n, m) = matrix.dim();
    n == m
        && (0..n).all(|i| {
            (i + 1..n).all(|j| (matrix[[i, j]] - matrix[[j, i]]).abs() <= tol * (1.0 + matrix[[i, j]].abs()))
        })
}
