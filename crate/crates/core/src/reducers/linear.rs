//! PCA (centred covariance eigenbasis) and truncated SVD (uncentred right
//! singular vectors).

use faer::Mat;

use super::{ReducerError, Result};
use crate::linalg::{symmetric_eigh, thin_svd};
use crate::store::EmbeddingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d x k`. Orthonormal columns unless the model was fitted with
    /// standardization, in which case row `j` carries the `1 / std_j` factor.
    pub components: Mat<f64>,
}

impl PcaModel {
    pub(crate) fn project(&self, x: &EmbeddingMatrix) -> Mat<f64> {
        let centred = Mat::from_fn(x.rows(), x.dim(), |i, j| x.row(i)[j] - self.mean[j]);
        &centred * &self.components
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvdModel {
    /// `V_k`, `d x k`.
    pub components: Mat<f64>,
}

impl SvdModel {
    pub(crate) fn project(&self, x: &EmbeddingMatrix) -> Mat<f64> {
        x.as_mat() * &self.components
    }
}

/// Returns the model and the top-`k` covariance eigenvalues (the variance of
/// the training scores along each component).
pub fn fit_pca(x: &EmbeddingMatrix, k: usize, standardize: bool) -> Result<(PcaModel, Vec<f64>)> {
    let (n, d) = (x.rows(), x.dim());
    if n < 2 {
        return Err(ReducerError::InvalidInput(format!(
            "pca needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > d {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim {k} outside [1, {d}]"
        )));
    }
    let mean = x.column_means();
    let mut centred = Mat::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);
    let scale: Option<Vec<f64>> = standardize.then(|| {
        (0..d)
            .map(|j| {
                let ss: f64 = (0..n).map(|i| centred[(i, j)] * centred[(i, j)]).sum();
                let sd = (ss / (n - 1) as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect()
    });
    if let Some(s) = &scale {
        for j in 0..d {
            for i in 0..n {
                centred[(i, j)] /= s[j];
            }
        }
    }
    let gram = centred.transpose() * &centred;
    let denom = (n - 1) as f64;
    let cov = Mat::from_fn(d, d, |i, j| 0.5 * (gram[(i, j)] + gram[(j, i)]) / denom);
    let eig = symmetric_eigh(cov.as_ref(), k)?;
    let mut components = eig.vectors;
    if let Some(s) = &scale {
        for c in 0..k {
            for j in 0..d {
                components[(j, c)] /= s[j];
            }
        }
    }
    Ok((PcaModel { mean, components }, eig.values))
}

/// Returns the model and the top-`k` singular values of `x` (no centring).
pub fn fit_svd(x: &EmbeddingMatrix, k: usize) -> Result<(SvdModel, Vec<f64>)> {
    let (n, d) = (x.rows(), x.dim());
    if n < 2 {
        return Err(ReducerError::InvalidInput(format!(
            "svd needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > n.min(d) {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim {k} outside [1, {}]",
            n.min(d)
        )));
    }
    let svd = thin_svd(x.as_mat(), k)?;
    Ok((
        SvdModel {
            components: svd.vt.transpose().to_owned(),
        },
        svd.s,
    ))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::reducers::{fit, transform, Method, ProjectionModel, ReducerConfig};
    use sentcomp_oracle::{covariance, eigh_power, svd_via_gram, SplitMix};

    fn from_dense(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(rows).unwrap()
    }

    fn pairwise_dist(m: &EmbeddingMatrix) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..m.rows() {
            for j in (i + 1)..m.rows() {
                let d: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(j))
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                out.push(d.sqrt());
            }
        }
        out
    }

    #[test]
    fn axis_aligned_toy() {
        let x = from_dense(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.5, 0.0],
            vec![-0.5, 0.0],
        ]);
        let (m, vals) = fit_pca(&x, 1, false).unwrap();
        assert!((m.components[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(m.components[(1, 0)].abs() < 1e-14);
        // variance = (1 + 1 + 0.25 + 0.25) / 3
        assert!((vals[0] - 2.5 / 3.0).abs() < 1e-14);
        let s = transform(&ProjectionModel::Pca(m), &x).unwrap();
        for (got, want) in s.values().iter().zip([1.0, -1.0, 0.5, -0.5]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn full_rank_preserves_distances_and_mean_maps_to_zero() {
        let mut rng = SplitMix::new(8);
        let x = from_dense(&rng.matrix(12, 5));
        let (m, vals) = fit_pca(&x, 5, false).unwrap();
        let gram = m.components.transpose() * &m.components;
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() <= 1e-8);
            }
        }
        let mean = from_dense(std::slice::from_ref(&m.mean));
        let model = ProjectionModel::Pca(m);
        let zero = transform(&model, &mean).unwrap();
        assert!(zero.values().iter().all(|v| v.abs() < 1e-12));
        let y = transform(&model, &x).unwrap();
        for (a, b) in pairwise_dist(&x).iter().zip(pairwise_dist(&y)) {
            assert!((a - b).abs() <= 1e-8);
        }
        // score variance equals eigenvalue, descending
        for c in 0..5 {
            let var: f64 = y.iter_rows().map(|r| r[c] * r[c]).sum::<f64>() / 11.0;
            assert!((var - vals[c]).abs() <= 1e-8 * vals[c]);
        }
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn matches_covariance_oracle() {
        let mut rng = SplitMix::new(21);
        let rows = rng.matrix(6, 4);
        let (cov, _) = covariance(&rows);
        let (ovals, ovecs) = eigh_power(&cov, 4, 1e-14);
        let (m, vals) = fit_pca(&from_dense(&rows), 4, false).unwrap();
        for c in 0..4 {
            assert!((vals[c] - ovals[c]).abs() <= 1e-9 * ovals[0]);
            for j in 0..4 {
                assert!((m.components[(j, c)] - ovecs[c][j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn standardization_equalizes_scales() {
        let mut rng = SplitMix::new(4);
        let mut rows = rng.matrix(30, 3);
        rows.iter_mut().for_each(|r| r[0] *= 1000.0);
        let x = from_dense(&rows);
        let (plain, _) = fit_pca(&x, 1, false).unwrap();
        assert!(plain.components[(0, 0)].abs() > 0.999);
        let (std, vals) = fit_pca(&x, 3, true).unwrap();
        let total: f64 = vals.iter().sum();
        // Correlation matrix trace equals the dimension.
        assert!((total - 3.0).abs() < 1e-9);
        assert!(std.components[(0, 0)].abs() < 0.01);
    }

    #[test]
    fn svd_diagonal_scores() {
        let x = from_dense(&[vec![3.0, 0.0], vec![0.0, 2.0]]);
        let m = fit(&ReducerConfig::new(Method::Svd, 1), &x).unwrap();
        let s = transform(&m, &x).unwrap();
        assert!((s.values()[0] - 3.0).abs() < 1e-14 && s.values()[1].abs() < 1e-14);
        let (full, _) = fit_svd(&x, 2).unwrap();
        assert!((full.components[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((full.components[(1, 1)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_on_centred_data_equals_pca_up_to_sign() {
        let mut rng = SplitMix::new(31);
        let mut rows = rng.matrix(10, 4);
        let (_, mean) = covariance(&rows);
        rows.iter_mut()
            .for_each(|r| r.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m));
        let x = from_dense(&rows);
        let pca = transform(&fit(&ReducerConfig::new(Method::Pca, 3), &x).unwrap(), &x).unwrap();
        let svd = transform(&fit(&ReducerConfig::new(Method::Svd, 3), &x).unwrap(), &x).unwrap();
        for c in 0..3 {
            let sign = if pca.row(0)[c] * svd.row(0)[c] < 0.0 {
                -1.0
            } else {
                1.0
            };
            for i in 0..10 {
                assert!((pca.row(i)[c] - sign * svd.row(i)[c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn svd_is_best_rank_k_subspace() {
        let mut rng = SplitMix::new(41);
        let rows = rng.matrix(5, 3);
        let (sv, _) = svd_via_gram(&rows, 3);
        let x = from_dense(&rows);
        for k in 1..=3 {
            let (m, _) = fit_svd(&x, k).unwrap();
            let xm = x.to_mat();
            let resid = &xm - &xm * &m.components * m.components.transpose();
            let optimum: f64 = sv[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
            assert!((resid.norm_l2() - optimum).abs() <= 1e-9);
        }
    }
}
