use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `k × d`, orthonormal rows.
    pub components: Array2<f64>,
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn cumulative_ratio(&self) -> f64 {
        self.explained_variance_ratio.sum()
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.components.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} scores for {} components",
                z.ncols(),
                self.components.nrows()
            )));
        }
        Ok(z.dot(&self.components) + &self.mean)
    }
}

/// Fits PCA and keeps the fewest leading components whose cumulative
/// explained-variance ratio exceeds `variance_threshold`.
///
/// With fewer rows than columns the eigenproblem is solved on the `n × n`
/// Gram matrix of the centred data, which shares its non-zero spectrum with
/// the covariance matrix.
pub fn pca_fit(x: ArrayView2<'_, f64>, variance_threshold: f64) -> Result<PcaModel> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::TooFewSamples { have: n, required: 2 });
    }
    if !(variance_threshold > 0.0 && variance_threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "variance threshold {variance_threshold}"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &x - &mean;
    let denom = (n - 1) as f64;
    let total: f64 = centered.iter().map(|v| v * v).sum::<f64>() / denom;
    if !(total > 0.0) {
        return Err(Error::DegenerateData);
    }

    let (variances, vectors): (Vec<f64>, Vec<Array1<f64>>) = if n <= d {
        let gram = centered.dot(&centered.t());
        let eig = symmetric_eigen(&gram)?;
        let max = eig.values[0].max(0.0);
        eig.values
            .iter()
            .enumerate()
            .take_while(|(_, &l)| l > max * 1e-12 && l > 0.0)
            .map(|(i, &l)| {
                let u = eig.vectors.column(i);
                let v = centered.t().dot(&u) / l.sqrt();
                (l / denom, v)
            })
            .unzip()
    } else {
        let cov = centered.t().dot(&centered) / denom;
        let eig = symmetric_eigen(&cov)?;
        let max = eig.values[0].max(0.0);
        eig.values
            .iter()
            .enumerate()
            .take_while(|(_, &l)| l > max * 1e-12 && l > 0.0)
            .map(|(i, &l)| (l, eig.vectors.column(i).to_owned()))
            .unzip()
    };

    let mut k = 0;
    let mut cum = 0.0;
    for v in &variances {
        cum += v / total;
        k += 1;
        if cum > variance_threshold || cum >= 1.0 - 1e-12 {
            break;
        }
    }
    let mut components = Array2::zeros((k, d));
    for (i, v) in vectors.iter().take(k).enumerate() {
        components.row_mut(i).assign(v);
    }
    let explained_variance = Array1::from_iter(variances.iter().take(k).copied());
    let explained_variance_ratio = explained_variance.mapv(|v| v / total);
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
    })
}

pub fn pca_transform(model: &PcaModel, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.ncols() != model.mean.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} columns, model fitted on {}",
            x.ncols(),
            model.mean.len()
        )));
    }
    Ok((&x - &model.mean).dot(&model.components.t()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
    }

    #[test]
    fn line_in_three_d() {
        let x = Array2::from_shape_fn((20, 3), |(i, j)| i as f64 * [1.0, -2.0, 0.5][j] + 3.0);
        let m = pca_fit(x.view(), 0.9).unwrap();
        assert_eq!(m.n_components(), 1);
        assert!((m.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_needs_both_axes() {
        // exactly isotropic: the four points of a square
        let x = ndarray::array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let m = pca_fit(x.view(), 0.9).unwrap();
        assert_eq!(m.n_components(), 2);
        assert!((m.explained_variance_ratio[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_bad_threshold() {
        let x = Array2::from_elem((5, 3), 2.0);
        assert_eq!(pca_fit(x.view(), 0.9).unwrap_err(), Error::DegenerateData);
        assert!(pca_fit(gaussian(5, 2, 1).view(), 0.0).is_err());
        assert!(pca_fit(gaussian(1, 2, 1).view(), 0.5).is_err());
    }

    fn reconstruction_identity(x: &Array2<f64>, thr: f64) {
        let m = pca_fit(x.view(), thr).unwrap();
        let z = pca_transform(&m, x.view()).unwrap();
        let back = m.inverse_transform(z.view()).unwrap();
        let centered = x - &m.mean;
        let num: f64 = (x - &back).iter().map(|v| v * v).sum();
        let den: f64 = centered.iter().map(|v| v * v).sum();
        let rel = num / den;
        let expected = 1.0 - m.cumulative_ratio();
        assert!(rel <= expected + 1e-9, "{rel} vs {expected}");
        assert!((rel - expected).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_error_matches_discarded_variance() {
        reconstruction_identity(&gaussian(50, 6, 2), 0.8);
        // wide data goes through the Gram route
        reconstruction_identity(&gaussian(12, 40, 3), 0.9);
    }

    #[test]
    fn scores_are_centered_and_uncorrelated() {
        for (n, d) in [(60, 5), (15, 50)] {
            let x = gaussian(n, d, 4) + 10.0;
            let m = pca_fit(x.view(), 0.95).unwrap();
            let rows = m.components.dot(&m.components.t());
            assert!((&rows - &Array2::<f64>::eye(m.n_components())).iter().all(|v| v.abs() < 1e-8));
            let ratios = &m.explained_variance_ratio;
            assert!(ratios.windows(2).into_iter().all(|w| w[0] >= w[1]));
            assert!(ratios.sum() <= 1.0 + 1e-9);
            let z = pca_transform(&m, x.view()).unwrap();
            let mu = z.mean_axis(Axis(0)).unwrap();
            assert!(mu.iter().all(|v| v.abs() <= 1e-9));
            let cov = z.t().dot(&z) / (n - 1) as f64;
            for i in 0..cov.nrows() {
                for j in 0..cov.ncols() {
                    if i != j {
                        assert!(cov[[i, j]].abs() <= 1e-6 * cov[[i, i]].max(cov[[j, j]]));
                    }
                }
            }
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // same data, tall vs wide orientation decided by n <= d
        let x = gaussian(9, 8, 5);
        let a = pca_fit(x.view(), 0.99).unwrap();
        let wide = ndarray::concatenate(Axis(1), &[x.view(), Array2::zeros((9, 1)).view()]).unwrap();
        let b = pca_fit(wide.view(), 0.99).unwrap();
        assert_eq!(a.n_components(), b.n_components());
        for (p, q) in a.explained_variance.iter().zip(b.explained_variance.iter()) {
            assert!((p - q).abs() < 1e-10);
        }
    }
}
