//! Unsupervised dimensionality reduction behind one fit/transform contract.
//!
//! [`fit`] learns a [`ProjectionModel`] from an embedding matrix without
//! labels; [`transform`] maps any matrix with the same input dimension to
//! `target_dim` columns. Models are immutable and serialize to the PRJ1
//! format (see [`format`]).

mod autoencoder;
pub mod format;
mod grp;
mod kernel;
mod kpca;
mod linear;

pub use autoencoder::{
    ae_loss_and_gradient, fit_autoencoder, train_autoencoder, AeHyperparams, AeOptimizer, AeParams,
    AutoencoderModel, TrainingTrace,
};
pub use format::{load_model, read_model, save_model, write_model};
pub use grp::{fit_grp, GrpModel};
pub use kernel::{center_kernel, cross_kernel, train_kernel, KernelKind, KernelSpec};
pub use kpca::{fit_kpca, kpca_from_centered, KpcaModel, KPCA_EPS};
pub use linear::{fit_pca, fit_svd, PcaModel, SvdModel};

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::LinalgError;
use crate::store::EmbeddingMatrix;

#[derive(Debug, Error)]
pub enum ReducerError {
    /// A caller-side precondition does not hold.
    #[error("{0}")]
    InvalidInput(String),
    #[error("dimension mismatch: model expects {expected} columns, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("insufficient positive spectrum: {available} of {requested} eigenvalues above {eps:e} * lambda_max")]
    InsufficientSpectrum {
        requested: usize,
        available: usize,
        eps: f64,
    },
    #[error("training diverged: non-finite loss at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("unsupported model version {0:?}")]
    Version(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ReducerError {
    /// Whether the failure is the caller's fault (bad arguments or shapes)
    /// rather than a numerical or I/O problem.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            ReducerError::InvalidInput(_) | ReducerError::DimensionMismatch { .. }
        )
    }
}

pub type Result<T, E = ReducerError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    Svd,
    Kpca,
    Grp,
    Autoencoder,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pca,
        Method::Svd,
        Method::Kpca,
        Method::Grp,
        Method::Autoencoder,
    ];

    /// Tag byte of the PRJ1 format.
    pub fn tag(self) -> u8 {
        match self {
            Method::Pca => 0,
            Method::Svd => 1,
            Method::Kpca => 2,
            Method::Grp => 3,
            Method::Autoencoder => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Svd => "svd",
            Method::Kpca => "kpca",
            Method::Grp => "grp",
            Method::Autoencoder => "autoencoder",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "pca" => Ok(Method::Pca),
            "svd" => Ok(Method::Svd),
            "kpca" => Ok(Method::Kpca),
            "grp" => Ok(Method::Grp),
            "ae" | "autoencoder" => Ok(Method::Autoencoder),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducerConfig {
    pub method: Method,
    pub target_dim: usize,
    pub seed: u64,
    /// KPCA kernel; `None` selects RBF with `gamma = 1 / input_dim`.
    pub kernel: Option<KernelSpec>,
    /// Added to the diagonal of the centred kernel before the eigensolve.
    pub kpca_jitter: f64,
    /// PCA only: divide centred columns by their standard deviation.
    pub standardize: bool,
    pub ae: AeHyperparams,
}

impl ReducerConfig {
    pub fn new(method: Method, target_dim: usize) -> Self {
        Self {
            method,
            target_dim,
            seed: 0,
            kernel: None,
            kpca_jitter: 0.0,
            standardize: false,
            ae: AeHyperparams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = Some(kernel);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionModel {
    Pca(PcaModel),
    Svd(SvdModel),
    Kpca(KpcaModel),
    Grp(GrpModel),
    Autoencoder(AutoencoderModel),
}

impl ProjectionModel {
    pub fn method(&self) -> Method {
        match self {
            ProjectionModel::Pca(_) => Method::Pca,
            ProjectionModel::Svd(_) => Method::Svd,
            ProjectionModel::Kpca(_) => Method::Kpca,
            ProjectionModel::Grp(_) => Method::Grp,
            ProjectionModel::Autoencoder(_) => Method::Autoencoder,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ProjectionModel::Pca(m) => m.mean.len(),
            ProjectionModel::Svd(m) => m.components.nrows(),
            ProjectionModel::Kpca(m) => m.train.dim(),
            ProjectionModel::Grp(m) => m.input_dim(),
            ProjectionModel::Autoencoder(m) => m.mean.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            ProjectionModel::Pca(m) => m.components.ncols(),
            ProjectionModel::Svd(m) => m.components.ncols(),
            ProjectionModel::Kpca(m) => m.eigenvalues.len(),
            ProjectionModel::Grp(m) => m.output_dim(),
            ProjectionModel::Autoencoder(m) => m.b1.len(),
        }
    }
}

fn check_fit_shape(cfg: &ReducerConfig, x: &EmbeddingMatrix) -> Result<()> {
    let k = cfg.target_dim;
    if k == 0 {
        return Err(ReducerError::InvalidInput(
            "target_dim must be at least 1".into(),
        ));
    }
    if cfg.method == Method::Grp {
        if k > x.dim() {
            return Err(ReducerError::InvalidInput(format!(
                "target_dim {k} exceeds input dimension {}",
                x.dim()
            )));
        }
        return Ok(());
    }
    if x.rows() < 2 {
        return Err(ReducerError::InvalidInput(format!(
            "{} needs at least 2 rows, got {}",
            cfg.method,
            x.rows()
        )));
    }
    if cfg.method == Method::Kpca && k > x.rows() {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim exceeds sample count ({k} > {})",
            x.rows()
        )));
    }
    if k > x.dim() {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim {k} exceeds input dimension {}",
            x.dim()
        )));
    }
    Ok(())
}

/// Fits the configured method on `x`.
pub fn fit(cfg: &ReducerConfig, x: &EmbeddingMatrix) -> Result<ProjectionModel> {
    check_fit_shape(cfg, x)?;
    let k = cfg.target_dim;
    Ok(match cfg.method {
        Method::Pca => ProjectionModel::Pca(fit_pca(x, k, cfg.standardize)?.0),
        Method::Svd => ProjectionModel::Svd(fit_svd(x, k)?.0),
        Method::Kpca => {
            let kernel = cfg
                .kernel
                .unwrap_or_else(|| KernelSpec::default_for_dim(x.dim()));
            ProjectionModel::Kpca(fit_kpca(x, k, &kernel, cfg.kpca_jitter)?)
        }
        Method::Grp => ProjectionModel::Grp(fit_grp(x.dim(), k, cfg.seed)?),
        Method::Autoencoder => {
            ProjectionModel::Autoencoder(fit_autoencoder(x, k, &cfg.ae, cfg.seed)?)
        }
    })
}

fn project(model: &ProjectionModel, x: &EmbeddingMatrix) -> Mat<f64> {
    match model {
        ProjectionModel::Pca(m) => m.project(x),
        ProjectionModel::Svd(m) => m.project(x),
        ProjectionModel::Kpca(m) => m.project(x),
        ProjectionModel::Grp(m) => m.project(x),
        ProjectionModel::Autoencoder(m) => m.project(x),
    }
}

fn check_transform_shape(model: &ProjectionModel, x: &EmbeddingMatrix) -> Result<()> {
    if x.dim() != model.input_dim() {
        return Err(ReducerError::DimensionMismatch {
            expected: model.input_dim(),
            found: x.dim(),
        });
    }
    Ok(())
}

/// Projects every row of `x`.
pub fn transform(model: &ProjectionModel, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    check_transform_shape(model, x)?;
    if x.rows() == 0 {
        return Ok(EmbeddingMatrix::zeros(0, model.output_dim()));
    }
    Ok(EmbeddingMatrix::from_mat(project(model, x).as_ref()))
}

/// Row-chunked transform on the rayon pool.
pub fn transform_parallel(
    model: &ProjectionModel,
    x: &EmbeddingMatrix,
    chunk_rows: usize,
) -> Result<EmbeddingMatrix> {
    check_transform_shape(model, x)?;
    let chunk_rows = chunk_rows.max(1);
    let starts: Vec<usize> = (0..x.rows()).step_by(chunk_rows).collect();
    let parts: Vec<EmbeddingMatrix> = starts
        .par_iter()
        .map(|&s| {
            let idx: Vec<usize> = (s..(s + chunk_rows).min(x.rows())).collect();
            EmbeddingMatrix::from_mat(project(model, &x.select_rows(&idx)).as_ref())
        })
        .collect();
    let mut out = EmbeddingMatrix::zeros(0, model.output_dim());
    for p in &parts {
        out = out.vstack(p).expect("chunks share the output dimension");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&[
            vec![1.0, 0.2, 3.0],
            vec![-1.0, 0.4, 0.0],
            vec![0.5, -0.3, 1.0],
            vec![2.0, 1.0, -1.0],
        ])
        .unwrap()
    }

    #[test]
    fn preconditions() {
        let x = toy();
        let err = fit(&ReducerConfig::new(Method::Pca, 4), &x).unwrap_err();
        assert!(err.is_usage());
        let err = fit(&ReducerConfig::new(Method::Kpca, 5), &x).unwrap_err();
        assert!(err.to_string().contains("target_dim exceeds sample count"));
        let one = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        for m in [Method::Pca, Method::Svd, Method::Kpca, Method::Autoencoder] {
            assert!(fit(&ReducerConfig::new(m, 1), &one).is_err(), "{m}");
        }
        assert!(fit(&ReducerConfig::new(Method::Grp, 1), &one).is_ok());
    }

    #[test]
    fn transform_checks_dimension() {
        let model = fit(&ReducerConfig::new(Method::Pca, 2), &toy()).unwrap();
        let bad = EmbeddingMatrix::zeros(2, 4);
        assert!(matches!(
            transform(&model, &bad),
            Err(ReducerError::DimensionMismatch {
                expected: 3,
                found: 4
            })
        ));
        let empty = transform(&model, &EmbeddingMatrix::zeros(0, 3)).unwrap();
        assert_eq!((empty.rows(), empty.dim()), (0, 2));
    }

    #[test]
    fn transforms_are_pure_and_parallel_path_agrees() {
        let x = toy();
        for m in Method::ALL {
            let mut cfg = ReducerConfig::new(m, 2).with_seed(3);
            cfg.ae.epochs = 3;
            let model = fit(&cfg, &x).unwrap();
            let a = transform(&model, &x).unwrap();
            let b = transform(&model, &x).unwrap();
            assert_eq!(a, b, "{m}");
            let p = transform_parallel(&model, &x, 3).unwrap();
            for (u, v) in a.values().iter().zip(p.values()) {
                assert!((u - v).abs() < 1e-12, "{m}");
            }
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("lda".parse::<Method>().is_err());
    }
}
