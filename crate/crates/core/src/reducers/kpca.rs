//! Kernel PCA.
//!
//! Component `i` is the unit eigenvector `a_i` of the double-centred kernel
//! matrix with eigenvalue `lambda_i`, and a point `z` scores
//! `a_i . k~(z) / sqrt(lambda_i)`, where `k~(z)` is the centred cross-kernel
//! vector against the training rows. With the linear kernel these scores
//! coincide with PCA scores up to sign.

use faer::Mat;

use super::kernel::{center_kernel, cross_kernel, train_kernel, KernelSpec};
use super::{ReducerError, Result};
use crate::linalg::symmetric_eigh;
use crate::store::EmbeddingMatrix;

/// Eigenvalues at or below `KPCA_EPS * lambda_max` are treated as zero.
pub const KPCA_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub train: EmbeddingMatrix,
    pub kernel: KernelSpec,
    pub eigenvalues: Vec<f64>,
    /// `n x k`, unit-norm columns.
    pub alphas: Mat<f64>,
    pub row_means: Vec<f64>,
    pub grand_mean: f64,
}

/// Top-`k` eigenpairs of an already centred kernel matrix, after adding
/// `jitter` to its diagonal. Fails unless all `k` eigenvalues are above
/// `KPCA_EPS * lambda_max`.
pub fn kpca_from_centered(
    centred: &Mat<f64>,
    k: usize,
    jitter: f64,
) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = centred.nrows();
    if k == 0 || k > n {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim exceeds sample count ({k} > {n})"
        )));
    }
    let eig = if jitter != 0.0 {
        let mut shifted = centred.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        symmetric_eigh(shifted.as_ref(), k)?
    } else {
        symmetric_eigh(centred.as_ref(), k)?
    };
    let threshold = KPCA_EPS * eig.values[0];
    let available = if eig.values[0] > 0.0 {
        eig.values.iter().take_while(|&&v| v > threshold).count()
    } else {
        0
    };
    if available < k {
        return Err(ReducerError::InsufficientSpectrum {
            requested: k,
            available,
            eps: KPCA_EPS,
        });
    }
    Ok((eig.values, eig.vectors))
}

pub fn fit_kpca(
    x: &EmbeddingMatrix,
    k: usize,
    kernel: &KernelSpec,
    jitter: f64,
) -> Result<KpcaModel> {
    kernel.validate()?;
    let n = x.rows();
    if n < 2 {
        return Err(ReducerError::InvalidInput(format!(
            "kpca needs at least 2 rows, got {n}"
        )));
    }
    if !jitter.is_finite() {
        return Err(ReducerError::InvalidInput(
            "kpca jitter must be finite".into(),
        ));
    }
    let mut k_mat = train_kernel(x.as_mat(), kernel);
    let (row_means, grand_mean) = center_kernel(&mut k_mat);
    let (eigenvalues, alphas) = kpca_from_centered(&k_mat, k, jitter)?;
    Ok(KpcaModel {
        train: x.clone(),
        kernel: *kernel,
        eigenvalues,
        alphas,
        row_means,
        grand_mean,
    })
}

impl KpcaModel {
    pub(crate) fn project(&self, z: &EmbeddingMatrix) -> Mat<f64> {
        let n = self.train.rows();
        let mut kz = cross_kernel(z.as_mat(), self.train.as_mat(), &self.kernel);
        for i in 0..kz.nrows() {
            let row_mean = (0..n).map(|j| kz[(i, j)]).sum::<f64>() / n as f64;
            for j in 0..n {
                kz[(i, j)] = kz[(i, j)] - row_mean - self.row_means[j] + self.grand_mean;
            }
        }
        let mut scores = &kz * &self.alphas;
        for (c, &lambda) in self.eigenvalues.iter().enumerate() {
            let inv = 1.0 / lambda.sqrt();
            for i in 0..scores.nrows() {
                scores[(i, c)] *= inv;
            }
        }
        scores
    }

    /// Scores of the training rows, `sqrt(lambda_i) * a_i`.
    pub fn training_scores(&self) -> Mat<f64> {
        Mat::from_fn(self.alphas.nrows(), self.alphas.ncols(), |i, c| {
            self.alphas[(i, c)] * self.eigenvalues[c].sqrt()
        })
    }
}
