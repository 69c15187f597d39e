//! Rank-based tests and the selection masks built on them.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::signal::{ClassLabel, FeatureMatrix};

/// Largest tie-free combined sample size handled by exact enumeration.
pub const EXACT_RANK_SUM_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    RankSumExact,
    RankSumNormal,
    KruskalWallis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

/// Midranks (1-based) of `values` and the tie term Σ(t³ − t).
pub fn midranks(values: &[f64]) -> (Vec<f64>, f64) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

// counts[s] = number of m-subsets of {1..n} whose sum is s
fn rank_sum_counts(n: usize, m: usize) -> Vec<u64> {
    let max_sum = n * (n + 1) / 2;
    let mut dp = vec![vec![0u64; max_sum + 1]; m + 1];
    dp[0][0] = 1;
    for r in 1..=n {
        for size in (1..=m.min(r)).rev() {
            for s in (r..=max_sum).rev() {
                dp[size][s] += dp[size - 1][s - r];
            }
        }
    }
    dp.swap_remove(m)
}

/// Two-sided Wilcoxon rank-sum test. The statistic is the rank sum of `x`.
///
/// Exact null distribution when the pooled sample is tie-free and at most
/// [`EXACT_RANK_SUM_MAX_N`] long; otherwise the normal approximation with tie
/// and continuity corrections.
pub fn rank_sum(x: &[f64], y: &[f64]) -> Result<TestResult> {
    for s in [x, y] {
        if s.len() < 2 {
            return Err(Error::TooFewSamples { have: s.len(), required: 2 });
        }
    }
    let (nx, ny) = (x.len(), y.len());
    let n = nx + ny;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let w: f64 = ranks[..nx].iter().sum();

    if ties == 0.0 && n <= EXACT_RANK_SUM_MAX_N {
        let counts = rank_sum_counts(n, nx);
        let w = w.round() as usize;
        let total: u64 = counts.iter().sum();
        let lower: u64 = counts[..=w].iter().sum();
        let upper: u64 = counts[w..].iter().sum();
        let p = (2 * lower.min(upper)) as f64 / total as f64;
        return Ok(TestResult {
            statistic: w as f64,
            p_value: p.min(1.0),
            method: TestMethod::RankSumExact,
        });
    }

    let (nxf, nyf, nf) = (nx as f64, ny as f64, n as f64);
    let mean = nxf * (nf + 1.0) / 2.0;
    let var = nxf * nyf / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(TestResult {
        statistic: w,
        p_value: p,
        method: TestMethod::RankSumNormal,
    })
}

fn kw_statistic(groups: &[&[f64]]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return 0.0;
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    (h / correction).max(0.0)
}

fn kw_result(groups: &[&[f64]]) -> TestResult {
    let h = kw_statistic(groups);
    let df = (groups.len() - 1) as f64;
    let chi = ChiSquared::new(df).expect("df >= 1");
    TestResult {
        statistic: h,
        p_value: chi.sf(h).clamp(0.0, 1.0),
        method: TestMethod::KruskalWallis,
    }
}

/// Kruskal-Wallis H test (tie-corrected) with a χ²(k−1) p-value.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 3 {
        return Err(Error::TooFewGroups { have: groups.len(), required: 3 });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::TooFewSamples { have: g.len(), required: 2 });
    }
    Ok(kw_result(groups))
}

/// Maximal runs of `p < alpha` lasting at least `min_len_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalMask {
    /// `(start, end)` sample indices, end exclusive.
    pub intervals: Vec<(usize, usize)>,
    pub fs: f64,
    pub alpha: f64,
    pub min_len_ms: f64,
}

impl IntervalMask {
    pub fn min_len_samples(fs: f64, min_len_ms: f64) -> usize {
        // guard against 31/1000*fs landing a hair above an integer
        ((min_len_ms / 1000.0 * fs) - 1e-9).ceil().max(1.0) as usize
    }

    pub fn contains(&self, t: usize) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t < b)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Boolean per time point.
    pub fn to_flags(&self, len: usize) -> Vec<bool> {
        (0..len).map(|t| self.contains(t)).collect()
    }
}

pub fn significant_intervals(p_series: &[f64], fs: f64, alpha: f64, min_len_ms: f64) -> IntervalMask {
    let min_len = IntervalMask::min_len_samples(fs, min_len_ms);
    let mut intervals = Vec::new();
    let mut start = None;
    for (t, &p) in p_series.iter().chain(std::iter::once(&1.0)).enumerate() {
        match (p < alpha, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                if t - s >= min_len {
                    intervals.push((s, t));
                }
                start = None;
            }
            _ => {}
        }
    }
    IntervalMask {
        intervals,
        fs,
        alpha,
        min_len_ms,
    }
}

fn two_classes(labels: &[ClassLabel]) -> Result<(ClassLabel, ClassLabel)> {
    let mut distinct: Vec<ClassLabel> = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    match distinct.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(Error::NotTwoClasses(other.len())),
    }
}

/// Rank-sum test of every column, lower-severity class as `x`.
pub fn feature_rank_sum(features: &FeatureMatrix) -> Result<Vec<TestResult>> {
    let (a, _) = two_classes(features.labels())?;
    let is_a: Vec<bool> = features.labels().iter().map(|&l| l == a).collect();
    features
        .values()
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| {
            let (mut x, mut y) = (Vec::new(), Vec::new());
            for (&v, &in_a) in col.iter().zip(&is_a) {
                if in_a { x.push(v) } else { y.push(v) }
            }
            rank_sum(&x, &y)
        })
        .collect()
}

/// Indices of columns whose rank-sum p is below `alpha` (all columns when
/// `alpha >= 1`).
pub fn select_feature_indices(features: &FeatureMatrix, alpha: f64) -> Result<Vec<usize>> {
    let results = feature_rank_sum(features)?;
    let keep: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| alpha >= 1.0 || r.p_value < alpha)
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return Err(Error::NoFeatureSurvives(alpha));
    }
    Ok(keep)
}

/// Names of the columns that separate the two classes at `alpha`.
/// Callers pass training rows only.
pub fn select_band_features(features: &FeatureMatrix, alpha: f64) -> Result<Vec<String>> {
    Ok(select_feature_indices(features, alpha)?
        .into_iter()
        .map(|i| features.names()[i].clone())
        .collect())
}

/// Kruskal-Wallis p-value of every column, rows grouped by `group_of_row`.
/// Groups with fewer than two rows make the column's p-value 1.
pub fn kruskal_wallis_columns(values: ArrayView2<'_, f64>, group_of_row: &[usize], n_groups: usize) -> Result<Vec<f64>> {
    if group_of_row.len() != values.nrows() {
        return Err(Error::LengthMismatch(group_of_row.len(), values.nrows()));
    }
    if n_groups < 2 {
        return Err(Error::TooFewGroups { have: n_groups, required: 2 });
    }
    let mut sizes = vec![0usize; n_groups];
    for &g in group_of_row {
        sizes[g] += 1;
    }
    if sizes.iter().any(|&s| s < 2) {
        return Ok(vec![1.0; values.ncols()]);
    }
    Ok(values
        .axis_iter(Axis(1))
        .into_par_iter()
        .map(|col| {
            let mut groups = vec![Vec::new(); n_groups];
            for (&v, &g) in col.iter().zip(group_of_row) {
                groups[g].push(v);
            }
            let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
            kw_result(&refs).p_value
        })
        .collect())
}
