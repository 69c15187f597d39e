//! Exhaustive hyperparameter search scored on a held-out validation set.

use std::cmp::Ordering;

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{check_training, solve_dual, Geometry, KernelKind, SvmModel, SvmParams};
use super::svm::{DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    /// Kernels in tie-break priority order.
    pub kernels: Vec<KernelKind>,
    pub c: Vec<f64>,
    /// Only swept for kernels that take a width.
    pub gamma: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self::standard()
    }
}

impl HyperGrid {
    /// 3 kernels, 7 values of C, 4 of gamma: 28 + 28 + 7 = 63 candidates.
    pub fn standard() -> Self {
        HyperGrid {
            kernels: vec![KernelKind::Rbf, KernelKind::Sigmoid, KernelKind::Linear],
            c: vec![1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
            gamma: vec![1e-3, 1e-4, 1e-5, 1e-6],
        }
    }

    pub fn candidates(&self) -> Vec<SvmParams> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &c in &self.c {
                if kernel.uses_gamma() {
                    for &g in &self.gamma {
                        out.push(SvmParams { kernel, c, gamma: Some(g) });
                    }
                } else {
                    out.push(SvmParams { kernel, c, gamma: None });
                }
            }
        }
        out
    }

    fn priority(&self, kind: KernelKind) -> usize {
        self.kernels.iter().position(|&k| k == kind).unwrap_or(usize::MAX)
    }

    /// Total order used to pick the winner: higher score, then kernel
    /// priority, smaller C, larger gamma.
    pub fn compare(&self, a: (&SvmParams, f64), b: (&SvmParams, f64)) -> Ordering {
        b.1.total_cmp(&a.1)
            .then(self.priority(a.0.kernel).cmp(&self.priority(b.0.kernel)))
            .then(a.0.c.total_cmp(&b.0.c))
            .then(b.0.gamma.unwrap_or(0.0).total_cmp(&a.0.gamma.unwrap_or(0.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvmParams,
    pub best_score: f64,
    /// Validation accuracy of every candidate, in grid order.
    pub scores: Vec<(SvmParams, f64)>,
}

/// Trains every candidate on `(x_train, y_train)` and scores it by accuracy
/// on `(x_val, y_val)`. Labels are ±1.
pub fn grid_search(
    grid: &HyperGrid,
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    x_val: ArrayView2<'_, f64>,
    y_val: &[f64],
) -> Result<GridResult> {
    check_training(x_train, y_train, 1.0)?;
    if x_val.nrows() != y_val.len() {
        return Err(Error::LengthMismatch(x_val.nrows(), y_val.len()));
    }
    if x_val.nrows() == 0 {
        return Err(Error::Empty);
    }
    if x_val.ncols() != x_train.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "validation has {} columns, training {}",
            x_val.ncols(),
            x_train.ncols()
        )));
    }
    let candidates = grid.candidates();
    if candidates.is_empty() {
        return Err(Error::Empty);
    }
    let train_geo = Geometry::new(x_train, x_train);
    let val_geo = Geometry::new(x_val, x_train);

    let scores: Vec<(SvmParams, f64)> = candidates
        .par_iter()
        .map(|p| {
            let kernel = p.to_kernel()?;
            let gram = train_geo.kernel(&kernel);
            let sol = solve_dual(&gram, y_train, p.c, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER);
            let cross = val_geo.kernel(&kernel);
            let correct = cross
                .axis_iter(Axis(0))
                .zip(y_val)
                .filter(|(row, &y)| {
                    let f: f64 = row
                        .iter()
                        .zip(sol.alpha.iter().zip(y_train))
                        .map(|(k, (a, yt))| a * yt * k)
                        .sum::<f64>()
                        + sol.bias;
                    (if f >= 0.0 { 1.0 } else { -1.0 }) == y
                })
                .count();
            Ok((*p, correct as f64 / y_val.len() as f64))
        })
        .collect::<Result<_>>()?;

    let (best, best_score) = scores
        .iter()
        .min_by(|a, b| grid.compare((&a.0, a.1), (&b.0, b.1)))
        .map(|(p, s)| (*p, *s))
        .expect("non-empty grid");
    Ok(GridResult {
        best,
        best_score,
        scores,
    })
}

/// Fits the chosen parameters on the full training set.
pub fn fit_params(x: ArrayView2<'_, f64>, y: &[f64], params: &SvmParams) -> Result<SvmModel> {
    super::svm::svm_train(x, y, params.to_kernel()?, params.c)
}
