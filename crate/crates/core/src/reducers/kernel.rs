//! Kernel functions evaluated through Gram products.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};

use super::ReducerError;
use crate::linalg::clear_vector_state;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Linear = 0,
    Rbf = 1,
    Poly = 2,
    Sigmoid = 3,
}

impl KernelKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(KernelKind::Linear),
            1 => Some(KernelKind::Rbf),
            2 => Some(KernelKind::Poly),
            3 => Some(KernelKind::Sigmoid),
            _ => None,
        }
    }
}

impl FromStr for KernelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(KernelKind::Linear),
            "rbf" => Ok(KernelKind::Rbf),
            "poly" => Ok(KernelKind::Poly),
            "sigmoid" => Ok(KernelKind::Sigmoid),
            other => Err(format!("unknown kernel {other:?}")),
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Linear => "linear",
            KernelKind::Rbf => "rbf",
            KernelKind::Poly => "poly",
            KernelKind::Sigmoid => "sigmoid",
        })
    }
}

/// `linear`: `<x, y>`; `rbf`: `exp(-gamma |x - y|^2)`;
/// `poly`: `(gamma <x, y> + coef0)^degree`; `sigmoid`: `tanh(gamma <x, y> + coef0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub gamma: f64,
    pub degree: u32,
    pub coef0: f64,
}

impl KernelSpec {
    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: 1.0,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn rbf(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Rbf,
            gamma,
            degree: 1,
            coef0: 0.0,
        }
    }

    pub fn poly(gamma: f64, degree: u32, coef0: f64) -> Self {
        Self {
            kind: KernelKind::Poly,
            gamma,
            degree,
            coef0,
        }
    }

    pub fn sigmoid(gamma: f64, coef0: f64) -> Self {
        Self {
            kind: KernelKind::Sigmoid,
            gamma,
            degree: 1,
            coef0,
        }
    }

    /// RBF with `gamma = 1 / dim`.
    pub fn default_for_dim(dim: usize) -> Self {
        Self::rbf(1.0 / dim as f64)
    }

    pub fn validate(&self) -> Result<(), ReducerError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(ReducerError::InvalidInput(format!(
                "kernel gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.degree < 1 {
            return Err(ReducerError::InvalidInput(
                "kernel degree must be >= 1".into(),
            ));
        }
        if !self.coef0.is_finite() {
            return Err(ReducerError::InvalidInput(
                "kernel coef0 must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Rbf => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-self.gamma * d2).exp()
            }
            KernelKind::Poly => (self.gamma * dot + self.coef0).powi(self.degree as i32),
            KernelKind::Sigmoid => (self.gamma * dot + self.coef0).tanh(),
        }
    }

    fn apply(&self, dot: f64, sq_dist: impl FnOnce() -> f64) -> f64 {
        match self.kind {
            KernelKind::Linear => dot,
            KernelKind::Rbf => (-self.gamma * sq_dist().max(0.0)).exp(),
            KernelKind::Poly => (self.gamma * dot + self.coef0).powi(self.degree as i32),
            KernelKind::Sigmoid => (self.gamma * dot + self.coef0).tanh(),
        }
    }
}

fn row_sq_norms(a: MatRef<'_, f64>) -> Vec<f64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * a[(i, j)]).sum())
        .collect()
}

/// Cross-kernel matrix `K[i][j] = k(a_i, b_j)`.
pub fn cross_kernel(a: MatRef<'_, f64>, b: MatRef<'_, f64>, spec: &KernelSpec) -> Mat<f64> {
    let gram = a * b.transpose();
    let (na, nb) = match spec.kind {
        KernelKind::Rbf => (row_sq_norms(a), row_sq_norms(b)),
        _ => (Vec::new(), Vec::new()),
    };
    clear_vector_state();
    Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
        let g = gram[(i, j)];
        spec.apply(g, || na[i] + nb[j] - 2.0 * g)
    })
}

/// Exactly symmetric training kernel matrix.
pub fn train_kernel(x: MatRef<'_, f64>, spec: &KernelSpec) -> Mat<f64> {
    let n = x.nrows();
    let gram = x * x.transpose();
    let norms = match spec.kind {
        KernelKind::Rbf => row_sq_norms(x),
        _ => Vec::new(),
    };
    // g[i][j] + g[j][i] is symmetric bit for bit, so every entry below is too
    let mut k = gram.as_ref() + gram.transpose();
    clear_vector_state();
    for j in 0..n {
        for (i, v) in k.col_as_slice_mut(j).iter_mut().enumerate() {
            let g = 0.5 * *v;
            *v = if i == j && spec.kind == KernelKind::Rbf {
                1.0
            } else {
                spec.apply(g, || norms[i] + norms[j] - 2.0 * g)
            };
        }
    }
    k
}

/// Double-centres a training kernel matrix in place and returns the
/// per-row means and the grand mean of the uncentred matrix.
pub fn center_kernel(k: &mut Mat<f64>) -> (Vec<f64>, f64) {
    let n = k.nrows();
    // column sums equal row sums for a symmetric matrix
    let row_means: Vec<f64> = (0..n)
        .map(|j| k.col_as_slice(j).iter().sum::<f64>() / n as f64)
        .collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    for j in 0..n {
        let mj = row_means[j];
        for (v, mi) in k.col_as_slice_mut(j).iter_mut().zip(&row_means) {
            *v = *v - (mi + mj) + grand_mean;
        }
    }
    (row_means, grand_mean)
}
