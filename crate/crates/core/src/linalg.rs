//! Dense linear algebra with fixed output conventions.
//!
//! The decompositions are computed by `faer` (sequential, so results are
//! reproducible bit-for-bit on one machine). On top of that this module
//! guarantees:
//!
//! * eigenvalues / singular values in descending order,
//! * unit-norm, mutually orthogonal vectors,
//! * a deterministic sign: the entry of largest magnitude in each
//!   eigenvector (or right singular vector) is positive, with near-ties
//!   (relative 1e-9) going to the lowest index.

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Relative asymmetry tolerated by [`symmetric_eigh`].
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("requested {requested} components from a matrix supporting at most {available}")]
    TooManyComponents { requested: usize, available: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("{0} did not converge within the iteration budget")]
    NoConvergence(&'static str),
}

/// Clears the upper halves of the wide vector registers.
///
/// faer's AVX kernels can return with dirty upper register state, after which
/// the scalar libm routines behind `exp` and `tanh` run tens of times slower on
/// some x86 cores. Call this between a faer product and an elementwise
/// transcendental pass.
pub fn clear_vector_state() {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: AVX support was checked at runtime.
        unsafe { std::arch::x86_64::_mm256_zeroupper() }
    }
}

/// Eigenpairs (or right singular pairs) sorted by descending value.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub values: Vec<f64>,
    /// Column `i` pairs with `values[i]`.
    pub vectors: Mat<f64>,
}

#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Mat<f64>,
    pub s: Vec<f64>,
    pub vt: Mat<f64>,
}

fn check_finite(a: MatRef<'_, f64>) -> Result<(), LinalgError> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(LinalgError::NonFinite);
            }
        }
    }
    Ok(())
}

/// Flips column `j` of `m` so that its largest-magnitude entry is positive.
/// Returns `true` when the column was negated.
pub(crate) fn normalize_column_sign(mut m: faer::MatMut<'_, f64>, j: usize) -> bool {
    let rows = m.nrows();
    let max = (0..rows).fold(0.0_f64, |acc, i| acc.max(m[(i, j)].abs()));
    if max == 0.0 {
        return false;
    }
    let pivot = (0..rows)
        .find(|&i| m[(i, j)].abs() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    if m[(pivot, j)] < 0.0 {
        for i in 0..m.nrows() {
            m[(i, j)] = -m[(i, j)];
        }
        true
    } else {
        false
    }
}

/// Top-`top_k` eigenpairs of a symmetric matrix.
pub fn symmetric_eigh(
    a: MatRef<'_, f64>,
    top_k: usize,
) -> Result<SpectralDecomposition, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    if top_k > n {
        return Err(LinalgError::TooManyComponents {
            requested: top_k,
            available: n,
        });
    }
    check_finite(a)?;
    let scale = (0..n)
        .flat_map(|j| (0..n).map(move |i| (i, j)))
        .fold(0.0_f64, |m, (i, j)| m.max(a[(i, j)].abs()));
    for j in 0..n {
        for i in (j + 1)..n {
            let gap = (a[(i, j)] - a[(j, i)]).abs();
            if gap > SYMMETRY_TOL * scale {
                return Err(LinalgError::NotSymmetric { i, j, gap });
            }
        }
    }
    if top_k == 0 {
        return Ok(SpectralDecomposition {
            values: Vec::new(),
            vectors: Mat::zeros(n, 0),
        });
    }
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::NoConvergence("symmetric eigensolver"))?;
    // faer sorts ascending.
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..top_k).map(|i| s[n - 1 - i]).collect();
    let mut vectors = Mat::from_fn(n, top_k, |i, j| u[(i, n - 1 - j)]);
    for j in 0..top_k {
        normalize_column_sign(vectors.as_mut(), j);
    }
    Ok(SpectralDecomposition { values, vectors })
}

/// Leading `top_k` singular triples of `x` (`m x n`).
///
/// `u` is `m x top_k`, `vt` is `top_k x n`; the sign convention is applied
/// to the rows of `vt` and mirrored onto the columns of `u`.
pub fn thin_svd(x: MatRef<'_, f64>, top_k: usize) -> Result<ThinSvd, LinalgError> {
    let (m, n) = (x.nrows(), x.ncols());
    let available = m.min(n);
    if top_k > available {
        return Err(LinalgError::TooManyComponents {
            requested: top_k,
            available,
        });
    }
    check_finite(x)?;
    if top_k == 0 {
        return Ok(ThinSvd {
            u: Mat::zeros(m, 0),
            s: Vec::new(),
            vt: Mat::zeros(0, n),
        });
    }
    let svd = x
        .thin_svd()
        .map_err(|_| LinalgError::NoConvergence("thin SVD"))?;
    let sv = svd.S().column_vector();
    let s: Vec<f64> = (0..top_k).map(|i| sv[i].max(0.0)).collect();
    let mut u = svd.U().subcols(0, top_k).to_owned();
    let mut v = svd.V().subcols(0, top_k).to_owned();
    for j in 0..top_k {
        if normalize_column_sign(v.as_mut(), j) {
            for i in 0..m {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
    Ok(ThinSvd {
        u,
        s,
        vt: v.transpose().to_owned(),
    })
}

/// Seeded random stream.
///
/// Backed by ChaCha8 (`rand_chacha`, seeded through `seed_from_u64`), whose
/// output sequence is stable across releases and independent of the
/// platform. Normals come from `rand_distr`'s ziggurat sampler.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.rng.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use sentcomp_oracle::{eigh_power, svd_via_gram, Dense, SplitMix};

    fn mat(rows: &Dense) -> Mat<f64> {
        Mat::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn random_symmetric(rng: &mut SplitMix, n: usize) -> Dense {
        let mut a = rng.matrix(n, n);
        for i in 0..n {
            for j in 0..i {
                a[i][j] = a[j][i];
            }
        }
        a
    }

    #[test]
    fn diagonal() {
        let a = mat(&vec![
            vec![3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ]);
        let e = symmetric_eigh(a.as_ref(), 2).unwrap();
        assert_eq!(e.values.len(), 2);
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 2.0).abs() < 1e-14);
        for i in 0..3 {
            assert!((e.vectors[(i, 0)] - [1.0, 0.0, 0.0][i]).abs() < 1e-14);
            assert!((e.vectors[(i, 1)] - [0.0, 0.0, 1.0][i]).abs() < 1e-14);
        }
    }

    #[test]
    fn two_by_two_sign_convention() {
        let a = mat(&vec![vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigh(a.as_ref(), 2).unwrap();
        let r = 0.5_f64.sqrt();
        assert!((e.values[0] - 3.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)] - r).abs() < 1e-14 && (e.vectors[(1, 0)] - r).abs() < 1e-14);
        assert!((e.vectors[(0, 1)] - r).abs() < 1e-14 && (e.vectors[(1, 1)] + r).abs() < 1e-14);
    }

    #[test]
    fn matches_power_iteration_oracle() {
        let mut rng = SplitMix::new(11);
        for _ in 0..10 {
            let a = random_symmetric(&mut rng, 6);
            let (vals, vecs) = eigh_power(&a, 6, 1e-13);
            let e = symmetric_eigh(mat(&a).as_ref(), 6).unwrap();
            for k in 0..6 {
                assert!(
                    (e.values[k] - vals[k]).abs() < 1e-9,
                    "{k}: {} vs {}",
                    e.values[k],
                    vals[k]
                );
                for i in 0..6 {
                    assert!((e.vectors[(i, k)] - vecs[k][i]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn orthonormal_and_small_residual() {
        let mut rng = SplitMix::new(5);
        let a = mat(&random_symmetric(&mut rng, 9));
        let e = symmetric_eigh(a.as_ref(), 9).unwrap();
        let gram = e.vectors.transpose() * &e.vectors;
        for i in 0..9 {
            for j in 0..9 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() <= 1e-8);
            }
            let v = e.vectors.col(i);
            let av = &a * v;
            let res: f64 = (0..9)
                .map(|r| (av[r] - e.values[i] * v[r]).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(res <= 1e-8 * (1.0 + e.values[i].abs()));
        }
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_asymmetric_and_oversized() {
        let a = mat(&vec![vec![1.0, 2.0], vec![0.0, 1.0]]);
        assert!(matches!(
            symmetric_eigh(a.as_ref(), 1),
            Err(LinalgError::NotSymmetric { .. })
        ));
        let b = mat(&vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            symmetric_eigh(b.as_ref(), 3),
            Err(LinalgError::TooManyComponents { .. })
        ));
    }

    #[test]
    fn svd_diagonal() {
        let x = mat(&vec![vec![3.0, 0.0], vec![0.0, 2.0]]);
        let s = thin_svd(x.as_ref(), 1).unwrap();
        assert!((s.s[0] - 3.0).abs() < 1e-14);
        assert!((s.vt[(0, 0)] - 1.0).abs() < 1e-14 && s.vt[(0, 1)].abs() < 1e-14);
        let proj = &x * s.vt.transpose();
        assert!((proj[(0, 0)] - 3.0).abs() < 1e-14 && proj[(1, 0)].abs() < 1e-14);
    }

    #[test]
    fn svd_exact_rank_recovery() {
        let mut rng = SplitMix::new(3);
        // rank 2 product of 6x2 and 2x4
        let l = mat(&rng.matrix(6, 2));
        let r = mat(&rng.matrix(2, 4));
        let x = &l * &r;
        let s = thin_svd(x.as_ref(), 2).unwrap();
        let mut us = s.u.clone();
        for j in 0..2 {
            for i in 0..6 {
                us[(i, j)] *= s.s[j];
            }
        }
        let rec = &us * &s.vt;
        let err = (&x - &rec).norm_l2();
        assert!(err <= 1e-9 * x.norm_l2());
    }

    #[test]
    fn svd_matches_gram_oracle() {
        let mut rng = SplitMix::new(17);
        for _ in 0..5 {
            let x = rng.matrix(5, 3);
            let (sv, vecs) = svd_via_gram(&x, 3);
            let s = thin_svd(mat(&x).as_ref(), 3).unwrap();
            for k in 0..3 {
                assert!((s.s[k] - sv[k]).abs() < 1e-9);
                for i in 0..3 {
                    assert!((s.vt[(k, i)] - vecs[k][i]).abs() < 1e-8);
                }
            }
            // Left vectors stay consistent with the right ones after sign fixes.
            let xm = mat(&x);
            let xv = &xm * s.vt.transpose();
            for k in 0..3 {
                for i in 0..5 {
                    assert!((xv[(i, k)] - s.u[(i, k)] * s.s[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gram_eigenvalues_nonnegative() {
        let mut rng = SplitMix::new(23);
        let x = mat(&rng.matrix(4, 7));
        let g = x.transpose() * &x;
        let g = Mat::from_fn(7, 7, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
        let e = symmetric_eigh(g.as_ref(), 7).unwrap();
        assert!(e.values.iter().all(|&v| v >= -1e-10 * e.values[0]));
    }

    #[test]
    fn deterministic() {
        let mut rng = SplitMix::new(29);
        let a = mat(&random_symmetric(&mut rng, 12));
        let e1 = symmetric_eigh(a.as_ref(), 5).unwrap();
        let e2 = symmetric_eigh(a.as_ref(), 5).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn rng_stream_reproducible() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        let xs: Vec<f64> = (0..16).map(|_| a.normal()).collect();
        let ys: Vec<f64> = (0..16).map(|_| b.normal()).collect();
        assert_eq!(xs, ys);
        let mut c = RngStream::new(43);
        assert_ne!(xs[0], c.normal());
    }
}
