//! Brute-force reference computations.
//!
//! Everything here is deliberately naive and shares no code with the
//! `sentcomp` crate, so it can be used to freeze and cross-check expected
//! values in tests. Matrices are `Vec<Vec<f64>>` in row-major order.

pub type Dense = Vec<Vec<f64>>;

pub fn transpose(a: &Dense) -> Dense {
    if a.is_empty() {
        return Vec::new();
    }
    (0..a[0].len())
        .map(|j| a.iter().map(|row| row[j]).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|t| row[t] * b[t][j]).sum())
                .collect()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(a: &Dense, v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, v)).collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Flip `v` so its largest-magnitude entry is positive; near-ties (within a
/// relative 1e-9) go to the lowest index.
pub fn normalize_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|x| x.abs() >= max * (1.0 - 1e-9))
        .unwrap_or(0);
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenpairs of a symmetric matrix by power iteration with Hotelling
/// deflation, largest eigenvalue first.
///
/// The matrix is shifted by its Frobenius norm so it becomes positive
/// semi-definite, which makes the dominant eigenvalue of the shifted matrix
/// the algebraically largest one of the original. Each pair is iterated
/// until the residual `|Bv - lambda v|` drops below `tol * |B|_F`.
pub fn eigh_power(a: &Dense, top_k: usize, tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let shift: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    let mut b: Dense = a.clone();
    for (i, row) in b.iter_mut().enumerate() {
        row[i] += shift;
    }
    let scale = b
        .iter()
        .flatten()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let mut values = Vec::with_capacity(top_k);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(top_k);
    for k in 0..top_k {
        // Deterministic start vector that is unlikely to be orthogonal to
        // any eigenvector.
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.37 * ((i + 3 * k + 1) as f64).sin())
            .collect();
        for u in &vectors {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        for _ in 0..20_000_000 {
            let mut w = matvec(&b, &v);
            // Re-orthogonalise against converged vectors to keep rounding
            // from reintroducing deflated directions.
            for u in &vectors {
                let p = dot(&w, u);
                w.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
            let lambda = dot(&v, &w);
            let residual: f64 = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            let nw = norm(&w);
            if nw == 0.0 {
                break;
            }
            v = w.iter().map(|x| x / nw).collect();
            if residual <= tol * scale {
                break;
            }
        }
        let lambda = dot(&v, &matvec(&b, &v));
        for i in 0..n {
            for j in 0..n {
                b[i][j] -= lambda * v[i] * v[j];
            }
        }
        normalize_sign(&mut v);
        values.push(lambda - shift);
        vectors.push(v);
    }
    (values, vectors)
}

/// Sample covariance `(x - mean)^T (x - mean) / (n - 1)` and the column mean.
pub fn covariance(x: &Dense) -> (Dense, Vec<f64>) {
    let n = x.len();
    let d = x[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; d]; d];
    for row in x {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for c in row.iter_mut() {
            *c /= (n - 1) as f64;
        }
    }
    (cov, mean)
}

/// Singular values and right singular vectors through the Gram matrix.
pub fn svd_via_gram(x: &Dense, top_k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let gram = matmul(&transpose(x), x);
    let (vals, vecs) = eigh_power(&gram, top_k, 1e-14);
    (vals.into_iter().map(|v| v.max(0.0).sqrt()).collect(), vecs)
}

/// 1-based fractional ranks; tied values share the mean of their positions.
///
/// Quadratic on purpose: each rank is counted directly from the definition.
pub fn average_ranks(a: &[f64]) -> Vec<f64> {
    a.iter()
        .map(|&x| {
            let less = a.iter().filter(|&&y| y < x).count() as f64;
            let equal = a.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Max over entries of `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Small deterministic generator (SplitMix64) so oracle fixtures do not
/// depend on the generator used by the code under test.
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Dense {
        (0..rows)
            .map(|_| (0..cols).map(|_| self.range(-1.0, 1.0)).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_on_two_by_two() {
        let (vals, vecs) = eigh_power(&vec![vec![2.0, 1.0], vec![1.0, 2.0]], 2, 1e-13);
        assert!((vals[0] - 3.0).abs() < 1e-10);
        assert!((vals[1] - 1.0).abs() < 1e-10);
        let r = 0.5_f64.sqrt();
        assert!((vecs[0][0] - r).abs() < 1e-9 && (vecs[0][1] - r).abs() < 1e-9);
        assert!((vecs[1][0] - r).abs() < 1e-9 && (vecs[1][1] + r).abs() < 1e-9);
    }

    #[test]
    fn power_iteration_handles_negative_spectrum() {
        let a = vec![
            vec![-3.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, -1.0],
        ];
        let (vals, _) = eigh_power(&a, 3, 1e-13);
        assert!((vals[0] - 1.0).abs() < 1e-9);
        assert!((vals[1] + 1.0).abs() < 1e-9);
        assert!((vals[2] + 3.0).abs() < 1e-9);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 3.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }
}
