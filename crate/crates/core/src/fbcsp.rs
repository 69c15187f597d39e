//! Filter-bank common spatial patterns for two-class problems.
//!
//! Each band is band-pass filtered, spatially filtered with CSP fitted on the
//! training classes, reduced to normalized log-variances, and the most
//! informative features across bands are kept by mutual information.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt_spd, is_symmetric, symmetric_eigen};
use crate::preprocess::{design_bandpass, filter_epochs};
use crate::signal::{BandDef, ClassLabel, EpochSet, FeatureMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialFilters {
    pub band: Option<BandDef>,
    /// `filters × channels`; rows ordered by descending eigenvalue.
    pub filters: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub n_pairs: usize,
}

/// Mean trace-normalized scatter `X·Xᵀ / tr(X·Xᵀ)` plus a small ridge.
pub fn class_covariance<'a, I>(epochs: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = ArrayView2<'a, f64>>,
{
    let mut acc: Option<Array2<f64>> = None;
    let mut count = 0usize;
    for x in epochs {
        let s = x.dot(&x.t());
        let tr = s.diag().sum();
        let term = if tr > 0.0 { s / tr } else { s };
        match acc.as_mut() {
            Some(a) => *a += &term,
            None => acc = Some(term),
        }
        count += 1;
    }
    let acc = acc.ok_or(Error::EmptyClass)?;
    Ok(finish_covariance(acc, count))
}

fn finish_covariance(sum: Array2<f64>, count: usize) -> Array2<f64> {
    let mean = sum / count as f64;
    let mut sym = (&mean + &mean.t()) * 0.5;
    let n = sym.nrows();
    let ridge = 1e-8 * sym.diag().sum() / n as f64;
    sym.diag_mut().mapv_inplace(|v| v + ridge);
    sym
}

/// Solves `cov_a·w = λ·(cov_a + cov_b)·w` by whitening the composite
/// covariance and diagonalizing the whitened class-a covariance. Keeps the
/// `n_pairs` largest and `n_pairs` smallest eigenvalues (all filters when the
/// channel count is not larger than `2·n_pairs`).
pub fn csp_fit(cov_a: &Array2<f64>, cov_b: &Array2<f64>, n_pairs: usize) -> Result<SpatialFilters> {
    if cov_a.dim() != cov_b.dim() || cov_a.nrows() != cov_a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "covariances {:?} and {:?}",
            cov_a.dim(),
            cov_b.dim()
        )));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidParameter("n_pairs must be at least 1".into()));
    }
    for c in [cov_a, cov_b] {
        if !is_symmetric(c, 1e-10) {
            return Err(Error::NotPositiveDefinite);
        }
        let eig = symmetric_eigen(c)?;
        if eig.values.iter().any(|&l| l <= 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
    }
    let composite = cov_a + cov_b;
    let whiten = inv_sqrt_spd(&composite)?;
    let s = whiten.dot(cov_a).dot(&whiten);
    let eig = symmetric_eigen(&s)?;
    let full = eig.vectors.t().dot(&whiten);

    let n = cov_a.nrows();
    let keep: Vec<usize> = if 2 * n_pairs >= n {
        (0..n).collect()
    } else {
        (0..n_pairs).chain(n - n_pairs..n).collect()
    };
    Ok(SpatialFilters {
        band: None,
        filters: full.select(Axis(0), &keep),
        eigenvalues: keep.iter().map(|&i| eig.values[i]).collect(),
        n_pairs,
    })
}

fn log_variance_ratio(vars: impl Iterator<Item = f64>) -> Vec<f64> {
    let vars: Vec<f64> = vars.map(|v| v.max(f64::MIN_POSITIVE)).collect();
    let total: f64 = vars.iter().sum();
    vars.iter().map(|v| (v / total).ln()).collect()
}

/// `log(var(Z_i) / Σ_j var(Z_j))` for `Z = W·X`.
pub fn csp_features(epoch: ArrayView2<'_, f64>, filters: &SpatialFilters) -> Result<Vec<f64>> {
    if epoch.nrows() != filters.filters.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "epoch has {} channels, filters expect {}",
            epoch.nrows(),
            filters.filters.ncols()
        )));
    }
    let z = filters.filters.dot(&epoch);
    Ok(log_variance_ratio(
        z.axis_iter(Axis(0)).map(|row| row.var(1.0)),
    ))
}

fn discretize(column: &[f64], bins: usize) -> Vec<usize> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
    let mut out = vec![0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && column[order[j]] == column[order[i]] {
            j += 1;
        }
        let bin = i * bins / n;
        for &k in &order[i..j] {
            out[k] = bin;
        }
        i = j;
    }
    out
}

/// Plug-in mutual information (nats) between each column and a binary class,
/// using ⌈√n⌉ equal-frequency bins. Tied values share a bin.
pub fn mutual_information(features: ArrayView2<'_, f64>, positive: &[bool]) -> Result<Vec<f64>> {
    let n = features.nrows();
    if positive.len() != n {
        return Err(Error::LengthMismatch(positive.len(), n));
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    let bins = (n as f64).sqrt().ceil() as usize;
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let pc = [(n as f64 - n_pos) / n as f64, n_pos / n as f64];
    Ok(features
        .axis_iter(Axis(1))
        .map(|col| {
            let col = col.to_vec();
            let b = discretize(&col, bins);
            let mut joint = vec![[0.0f64; 2]; bins];
            for (&bin, &p) in b.iter().zip(positive) {
                joint[bin][p as usize] += 1.0;
            }
            let mut mi = 0.0;
            for cell in &joint {
                let pb = (cell[0] + cell[1]) / n as f64;
                for c in 0..2 {
                    let pbc = cell[c] / n as f64;
                    if pbc > 0.0 {
                        mi += pbc * (pbc / (pb * pc[c])).ln();
                    }
                }
            }
            mi
        })
        .collect())
}

/// Indices of the `k` columns with the highest mutual information, returned
/// in ascending index order. Ties prefer the lower index.
pub fn mutual_information_select(features: ArrayView2<'_, f64>, positive: &[bool], k: usize) -> Result<Vec<usize>> {
    let d = features.ncols();
    if k == 0 || k > d {
        return Err(Error::BadK { k, n_features: d });
    }
    let mi = mutual_information(features, positive)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| mi[b].total_cmp(&mi[a]).then(a.cmp(&b)));
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Per-trial second moments of one band-filtered epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialScatter {
    /// `X·Xᵀ` over the full epoch.
    pub scatter: Array2<f64>,
    pub mean: Array1<f64>,
    pub n_times: usize,
}

impl TrialScatter {
    pub fn from_epoch(x: ArrayView2<'_, f64>) -> Self {
        TrialScatter {
            scatter: x.dot(&x.t()),
            mean: x.mean_axis(Axis(1)).expect("non-empty epoch"),
            n_times: x.ncols(),
        }
    }

    fn restricted(&self, channels: &[usize]) -> (Array2<f64>, Array1<f64>) {
        (
            self.scatter.select(Axis(0), channels).select(Axis(1), channels),
            self.mean.select(Axis(0), channels),
        )
    }

    /// Unbiased channel covariance on `channels`.
    pub fn covariance(&self, channels: &[usize]) -> Array2<f64> {
        let (s, m) = self.restricted(channels);
        let n = self.n_times as f64;
        let outer = m
            .view()
            .insert_axis(Axis(1))
            .dot(&m.view().insert_axis(Axis(0)));
        (s - outer * n) / (n - 1.0)
    }

    fn normalized_scatter(&self, channels: &[usize]) -> Array2<f64> {
        let (s, _) = self.restricted(channels);
        let tr = s.diag().sum();
        if tr > 0.0 { s / tr } else { s }
    }
}

/// Band-filtered second moments of every trial, one entry per band. Label
/// independent, so it can be computed once for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBankMoments {
    pub bands: Vec<BandDef>,
    /// `per_band[b][trial]`
    pub per_band: Vec<Vec<TrialScatter>>,
    pub n_channels: usize,
}

impl FilterBankMoments {
    pub fn compute(epochs: &EpochSet, bands: &[BandDef], n_taps: usize) -> Result<Self> {
        let fs = epochs.montage().fs();
        let per_band = bands
            .iter()
            .map(|band| {
                let kernel = design_bandpass(band.f_low, band.f_high, fs, n_taps)?;
                let filtered = filter_epochs(epochs, &kernel)?;
                Ok((0..filtered.n_trials())
                    .into_par_iter()
                    .map(|t| TrialScatter::from_epoch(filtered.epoch(t)))
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(FilterBankMoments {
            bands: bands.to_vec(),
            per_band,
            n_channels: epochs.n_channels(),
        })
    }

    pub fn n_trials(&self) -> usize {
        self.per_band.first().map_or(0, |b| b.len())
    }

    /// Trials of several sets one after another.
    pub fn concat(parts: &[&FilterBankMoments]) -> Result<FilterBankMoments> {
        let first = parts.first().ok_or(Error::Empty)?;
        if parts.iter().any(|p| p.bands != first.bands || p.n_channels != first.n_channels) {
            return Err(Error::DimensionMismatch("filter banks differ".into()));
        }
        Ok(FilterBankMoments {
            bands: first.bands.clone(),
            per_band: (0..first.bands.len())
                .map(|b| parts.iter().flat_map(|p| p.per_band[b].iter().cloned()).collect())
                .collect(),
            n_channels: first.n_channels,
        })
    }

    /// Moments of a subset of trials, in the given order.
    pub fn select(&self, trials: &[usize]) -> FilterBankMoments {
        FilterBankMoments {
            bands: self.bands.clone(),
            per_band: self
                .per_band
                .iter()
                .map(|b| trials.iter().map(|&t| b[t].clone()).collect())
                .collect(),
            n_channels: self.n_channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FbcspConfig {
    pub n_pairs: usize,
    pub k: usize,
    pub n_taps: usize,
}

impl Default for FbcspConfig {
    fn default() -> Self {
        FbcspConfig {
            n_pairs: 2,
            k: 4,
            n_taps: 257,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandModel {
    pub channels: Vec<usize>,
    pub filters: SpatialFilters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbcspModel {
    pub bands: Vec<BandModel>,
    /// Column names before selection, `band:cspN`.
    pub feature_names: Vec<String>,
    pub selected: Vec<usize>,
    pub n_channels: usize,
}

impl FbcspModel {
    /// Fits CSP per band on the trials' moments and selects features by MI.
    /// `labels` align with the trials of `moments`.
    pub fn fit(
        moments: &FilterBankMoments,
        labels: &[ClassLabel],
        channel_masks: &[Vec<usize>],
        config: &FbcspConfig,
    ) -> Result<(FbcspModel, Array2<f64>)> {
        if labels.len() != moments.n_trials() {
            return Err(Error::LengthMismatch(labels.len(), moments.n_trials()));
        }
        if channel_masks.len() != moments.bands.len() {
            return Err(Error::LengthMismatch(channel_masks.len(), moments.bands.len()));
        }
        let mut classes = labels.to_vec();
        classes.sort();
        classes.dedup();
        let (class_a, class_b) = match classes.as_slice() {
            [a, b] => (*a, *b),
            other => return Err(Error::NotTwoClasses(other.len())),
        };

        let bands = moments
            .bands
            .par_iter()
            .zip(&moments.per_band)
            .zip(channel_masks)
            .map(|((band, trials), mask)| {
                if mask.len() < 2 || mask.iter().any(|&c| c >= moments.n_channels) {
                    return Err(Error::InvalidParameter(format!(
                        "band {} channel mask {:?}",
                        band.name, mask
                    )));
                }
                let class_cov = |class: ClassLabel| -> Result<Array2<f64>> {
                    let mut sum: Option<Array2<f64>> = None;
                    let mut count = 0;
                    for (t, &l) in trials.iter().zip(labels) {
                        if l == class {
                            let s = t.normalized_scatter(mask);
                            match sum.as_mut() {
                                Some(acc) => *acc += &s,
                                None => sum = Some(s),
                            }
                            count += 1;
                        }
                    }
                    Ok(finish_covariance(sum.ok_or(Error::EmptyClass)?, count))
                };
                let mut filters = csp_fit(&class_cov(class_a)?, &class_cov(class_b)?, config.n_pairs)?;
                filters.band = Some(band.clone());
                Ok(BandModel {
                    channels: mask.clone(),
                    filters,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let feature_names: Vec<String> = bands
            .iter()
            .flat_map(|b| {
                let name = b.filters.band.as_ref().map(|d| d.name.clone()).unwrap_or_default();
                (0..b.filters.filters.nrows()).map(move |i| format!("{name}:csp{i}"))
            })
            .collect();
        let mut model = FbcspModel {
            bands,
            feature_names,
            selected: Vec::new(),
            n_channels: moments.n_channels,
        };
        let all = model.all_features(moments)?;
        let positive: Vec<bool> = labels.iter().map(|&l| l == class_b).collect();
        let k = config.k.min(all.ncols());
        model.selected = mutual_information_select(all.view(), &positive, k)?;
        let out = all.select(Axis(1), &model.selected);
        Ok((model, out))
    }

    /// Every band's log-variance features before selection.
    pub fn all_features(&self, moments: &FilterBankMoments) -> Result<Array2<f64>> {
        if moments.bands.len() != self.bands.len() || moments.n_channels != self.n_channels {
            return Err(Error::DimensionMismatch(
                "filter bank does not match the fitted model".into(),
            ));
        }
        let n = moments.n_trials();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|t| {
                let mut row = Vec::with_capacity(self.feature_names.len());
                for (bm, trials) in self.bands.iter().zip(&moments.per_band) {
                    let cov = trials[t].covariance(&bm.channels);
                    let w = &bm.filters.filters;
                    let vars = w.axis_iter(Axis(0)).map(|wi| wi.dot(&cov.dot(&wi)));
                    row.extend(log_variance_ratio(vars));
                }
                row
            })
            .collect();
        Array2::from_shape_vec((n, self.feature_names.len()), rows.into_iter().flatten().collect())
            .map_err(|e| Error::ShapeMismatch(e.to_string()))
    }

    /// Selected features for new trials. Takes no labels.
    pub fn transform(&self, moments: &FilterBankMoments) -> Result<Array2<f64>> {
        Ok(self.all_features(moments)?.select(Axis(1), &self.selected))
    }

    pub fn selected_names(&self) -> Vec<String> {
        self.selected.iter().map(|&i| self.feature_names[i].clone()).collect()
    }
}

fn to_feature_matrix(model: &FbcspModel, values: Array2<f64>, epochs: &EpochSet) -> Result<FeatureMatrix> {
    FeatureMatrix::new(
        model.selected_names(),
        values,
        epochs.labels().to_vec(),
        epochs.subject_ids().to_vec(),
    )
}

/// Band-pass, CSP and MI selection fitted on `train`. Class labels come from
/// the epoch metadata.
pub fn fbcsp_fit_transform(
    train: &EpochSet,
    bands: &[BandDef],
    channel_masks: &[Vec<usize>],
    config: &FbcspConfig,
) -> Result<(FbcspModel, FeatureMatrix)> {
    let moments = FilterBankMoments::compute(train, bands, config.n_taps)?;
    let (model, values) = FbcspModel::fit(&moments, train.labels(), channel_masks, config)?;
    let fm = to_feature_matrix(&model, values, train)?;
    Ok((model, fm))
}

pub fn fbcsp_apply(model: &FbcspModel, epochs: &EpochSet, n_taps: usize) -> Result<FeatureMatrix> {
    let bands: Vec<BandDef> = model
        .bands
        .iter()
        .map(|b| b.filters.band.clone().ok_or_else(|| Error::InvalidParameter("model band missing".into())))
        .collect::<Result<_>>()?;
    let moments = FilterBankMoments::compute(epochs, &bands, n_taps)?;
    let values = model.transform(&moments)?;
    to_feature_matrix(model, values, epochs)
}
