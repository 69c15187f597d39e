//! Soft-margin kernel SVM trained on the dual with SMO.
//!
//! The solver follows the usual decomposition scheme: the first index of the
//! working pair is the maximal KKT violator, the second maximizes the
//! second-order decrease of the objective. Ties go to the lowest index so
//! training is fully deterministic.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ClassLabel;

pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Sigmoid,
    Linear,
}

impl KernelKind {
    pub fn uses_gamma(self) -> bool {
        self != KernelKind::Linear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Sigmoid { gamma: f64, coef0: f64 },
}

impl Kernel {
    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Linear => KernelKind::Linear,
            Kernel::Rbf { .. } => KernelKind::Rbf,
            Kernel::Sigmoid { .. } => KernelKind::Sigmoid,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } | Kernel::Sigmoid { gamma, .. } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::InvalidParameter(format!("gamma {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value from the inner product and squared norms of the pair.
    #[inline]
    pub fn from_geometry(&self, dot: f64, sq_a: f64, sq_b: f64) -> f64 {
        match *self {
            Kernel::Linear => dot,
            Kernel::Rbf { gamma } => (-gamma * (sq_a + sq_b - 2.0 * dot).max(0.0)).exp(),
            Kernel::Sigmoid { gamma, coef0 } => (gamma * dot + coef0).tanh(),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            _ => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                self.from_geometry(dot, 0.0, 0.0)
            }
        }
    }
}

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: KernelKind,
    pub c: f64,
    /// Ignored (and `None`) for the linear kernel.
    pub gamma: Option<f64>,
}

impl SvmParams {
    pub fn to_kernel(&self) -> Result<Kernel> {
        match (self.kernel, self.gamma) {
            (KernelKind::Linear, _) => Ok(Kernel::Linear),
            (KernelKind::Rbf, Some(gamma)) => Ok(Kernel::Rbf { gamma }),
            (KernelKind::Sigmoid, Some(gamma)) => Ok(Kernel::Sigmoid { gamma, coef0: 0.0 }),
            (k, None) => Err(Error::InvalidParameter(format!("{k:?} kernel needs gamma"))),
        }
    }
}

/// Inner products and squared norms between two row sets.
pub(crate) struct Geometry {
    pub dots: Array2<f64>,
    pub sq_a: Vec<f64>,
    pub sq_b: Vec<f64>,
}

impl Geometry {
    pub fn new(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Self {
        let sq = |m: ArrayView2<'_, f64>| m.axis_iter(Axis(0)).map(|r| r.dot(&r)).collect();
        Geometry {
            dots: a.dot(&b.t()),
            sq_a: sq(a),
            sq_b: sq(b),
        }
    }

    pub fn kernel(&self, kernel: &Kernel) -> Array2<f64> {
        Array2::from_shape_fn(self.dots.dim(), |(i, j)| {
            kernel.from_geometry(self.dots[[i, j]], self.sq_a[i], self.sq_b[j])
        })
    }
}

/// Dual solution of the SMO solver.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `½ αᵀQα − Σα` subject to `0 ≤ α ≤ C`, `yᵀα = 0`, with
/// `Q_ij = y_i y_j K_ij`. `kernel` is the full `n × n` Gram matrix.
pub(crate) fn solve_dual(kernel: &Array2<f64>, y: &[f64], c: f64, tol: f64, max_iter: usize) -> DualSolution {
    let n = y.len();
    let k = |i: usize, j: usize| kernel[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let diag: Vec<f64> = (0..n).map(|i| k(i, i)).collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up {
                let v = -y[t] * grad[t];
                if v > gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        // j: best second-order gain in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            let ki = kernel.row(i);
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                if v > gmax2 {
                    gmax2 = v;
                }
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = diag[i] + diag[t] - 2.0 * y[i] * y[t] * ki[t];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (i_sel, j_sel) {
            (Some(i), Some(j)) if gmax + gmax2 >= tol => (i, j),
            _ => {
                converged = true;
                break;
            }
        };
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = k(i, j);
        if y[i] != y[j] {
            let mut quad = diag[i] + diag[j] + 2.0 * kij * y[i] * y[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = diag[i] + diag[j] - 2.0 * kij * y[i] * y[j];
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        let (ki, kj) = (kernel.row(i), kernel.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
    }

    // offset from free vectors, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
    DualSolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
    }
}

/// `Σα − ½ αᵀQα` (the dual in maximization form).
pub fn dual_objective(kernel: &Array2<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[[i, j]];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub support_vectors: Array2<f64>,
    /// Training-row index of each support vector.
    pub support_indices: Vec<usize>,
    /// `α_i` of each support vector.
    pub alphas: Vec<f64>,
    /// `±1` label of each support vector.
    pub sv_labels: Vec<f64>,
    pub bias: f64,
    /// Classes mapped to `(−1, +1)`, when known.
    pub class_map: Option<(ClassLabel, ClassLabel)>,
    pub converged: bool,
    pub iterations: usize,
}

impl SvmModel {
    pub fn n_features(&self) -> usize {
        self.support_vectors.ncols()
    }

    /// `f(x) = Σ α_i y_i K(x_i, x) + b` per row.
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "{} features, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        let k = Geometry::new(x, self.support_vectors.view()).kernel(&self.kernel);
        Ok(k.axis_iter(Axis(0))
            .map(|row| {
                row.iter()
                    .zip(self.alphas.iter().zip(&self.sv_labels))
                    .map(|(kv, (a, y))| a * y * kv)
                    .sum::<f64>()
                    + self.bias
            })
            .collect())
    }

    /// Full dual vector over `n_train` training rows, zero off the support.
    pub fn dual_coefficients(&self, n_train: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; n_train];
        for (&i, &a) in self.support_indices.iter().zip(&self.alphas) {
            alpha[i] = a;
        }
        alpha
    }

    /// `sign(f(x))` with zero mapped to `+1`.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self
            .decision(x)?
            .into_iter()
            .map(|d| if d >= 0.0 { 1.0 } else { -1.0 })
            .collect())
    }
}

pub(crate) fn check_training(x: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("C = {c}")));
    }
    if let Some(((r, col), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteFeature(r, col));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidParameter("labels must be ±1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

pub(crate) fn model_from_solution(x: ArrayView2<'_, f64>, y: &[f64], kernel: Kernel, c: f64, sol: DualSolution) -> SvmModel {
    let sv: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
    SvmModel {
        kernel,
        c,
        support_vectors: x.select(Axis(0), &sv),
        support_indices: sv.clone(),
        alphas: sv.iter().map(|&i| sol.alpha[i]).collect(),
        sv_labels: sv.iter().map(|&i| y[i]).collect(),
        bias: sol.bias,
        class_map: None,
        converged: sol.converged,
        iterations: sol.iterations,
    }
}

/// Trains with the default KKT tolerance and iteration cap. A run that hits
/// the cap still returns its last iterate, flagged `converged = false`.
pub fn svm_train(x: ArrayView2<'_, f64>, y: &[f64], kernel: Kernel, c: f64) -> Result<SvmModel> {
    svm_train_with(x, y, kernel, c, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)
}

pub fn svm_train_with(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    kernel: Kernel,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SvmModel> {
    check_training(x, y, c)?;
    kernel.check()?;
    let gram = Geometry::new(x, x).kernel(&kernel);
    let sol = solve_dual(&gram, y, c, tol, max_iter);
    Ok(model_from_solution(x, y, kernel, c, sol))
}

/// Largest KKT violation `max_{I_up}(−y∇) − min_{I_low}(−y∇)` of a dual point.
pub fn kkt_violation(kernel: &Array2<f64>, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = y.len();
    let grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * kernel[[i, j]] * alpha[j]).sum::<f64>() - 1.0)
        .collect();
    let (mut m_up, mut m_low) = (f64::NEG_INFINITY, f64::INFINITY);
    for t in 0..n {
        let v = -y[t] * grad[t];
        let in_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if in_up {
            m_up = m_up.max(v);
        }
        if in_low {
            m_low = m_low.min(v);
        }
    }
    (m_up - m_low).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn symmetric_pair() {
        let x = array![[-1.0], [1.0]];
        let m = svm_train(x.view(), &[-1.0, 1.0], Kernel::Linear, 1000.0).unwrap();
        assert_eq!(m.alphas.len(), 2);
        let d = m.decision(array![[0.0], [1.0], [-1.0]].view()).unwrap();
        assert!(d[0].abs() < 1e-9);
        assert!((d[1] - 1.0).abs() < 1e-9 && (d[2] + 1.0).abs() < 1e-9);
        // margin = 2 / |w|, w = Σ α y x
        let w: f64 = m.alphas.iter().zip(&m.sv_labels).zip(m.support_vectors.iter()).map(|((a, y), x)| a * y * x).sum();
        assert!((2.0 / w.abs() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn xor_with_rbf() {
        let x = array![[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
        let y = [-1.0, -1.0, 1.0, 1.0];
        let m = svm_train(x.view(), &y, Kernel::Rbf { gamma: 1.0 }, 1000.0).unwrap();
        assert_eq!(m.predict(x.view()).unwrap(), y.to_vec());
        assert!(m.converged);
    }

    #[test]
    fn training_errors() {
        let x = array![[0.0], [1.0]];
        assert_eq!(svm_train(x.view(), &[1.0, 1.0], Kernel::Linear, 1.0).unwrap_err(), Error::SingleClass);
        assert!(svm_train(x.view(), &[1.0, -1.0], Kernel::Linear, 0.0).is_err());
        assert!(svm_train(x.view(), &[1.0, -1.0], Kernel::Rbf { gamma: -1.0 }, 1.0).is_err());
        let m = svm_train(x.view(), &[1.0, -1.0], Kernel::Linear, 1.0).unwrap();
        assert!(matches!(m.decision(array![[0.0, 1.0]].view()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_decision_predicts_positive() {
        let x = array![[-1.0], [1.0]];
        let m = svm_train(x.view(), &[-1.0, 1.0], Kernel::Linear, 1000.0).unwrap();
        let mut m = m;
        m.bias = 0.0;
        assert_eq!(m.predict(array![[0.0]].view()).unwrap(), vec![1.0]);
    }

    #[test]
    fn rbf_rescaling_identity() {
        let x = array![[0.0, 0.3], [1.0, 1.2], [0.2, 1.0], [1.1, 0.1], [0.5, 0.4]];
        let y = [-1.0, -1.0, 1.0, 1.0, 1.0];
        // rounding in K can steer SMO down a different path, so solve tightly
        let m = svm_train_with(x.view(), &y, Kernel::Rbf { gamma: 0.7 }, 10.0, 1e-10, DEFAULT_MAX_ITER).unwrap();
        let cx = &x * 3.0;
        let m2 = svm_train_with(cx.view(), &y, Kernel::Rbf { gamma: 0.7 / 9.0 }, 10.0, 1e-10, DEFAULT_MAX_ITER).unwrap();
        let probe = array![[0.3, 0.3], [0.9, 0.8]];
        let d1 = m.decision(probe.view()).unwrap();
        let d2 = m2.decision((&probe * 3.0).view()).unwrap();
        for (a, b) in d1.iter().zip(&d2) {
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
        assert_eq!(m.predict(probe.view()).unwrap(), m2.predict((&probe * 3.0).view()).unwrap());
    }

    #[test]
    fn decision_continuous_in_gamma() {
        let x = array![[0.0, 0.3], [1.0, 1.2], [0.2, 1.0], [1.1, 0.1]];
        let y = [-1.0, -1.0, 1.0, 1.0];
        let m = svm_train(x.view(), &y, Kernel::Rbf { gamma: 0.5 }, 10.0).unwrap();
        let mut m2 = m.clone();
        m2.kernel = Kernel::Rbf { gamma: 0.5 * (1.0 + 1e-9) };
        let probe = array![[0.5, 0.5], [2.0, -1.0], [0.1, 0.9]];
        for (a, b) in m.decision(probe.view()).unwrap().iter().zip(m2.decision(probe.view()).unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
