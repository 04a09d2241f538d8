//! Synthetic corpora with a known intrinsic dimension.
//!
//! Latent points live in `R^intrinsic` and are embedded into `R^d` through a
//! random orthonormal frame, then perturbed by isotropic Gaussian noise.
//! Rows come in consecutive pairs `(2i, 2i + 1)` whose gold score is the
//! cosine between the two noiseless latents. The second latent of each pair
//! is built to have cosine `t ~ U(-1, 1)` with the first, so gold scores
//! cover the whole range.

use crate::linalg::RngStream;

use super::{EmbeddingMatrix, Gold, LabelKind, PairDataset, PairRecord, Result, StoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub embeddings: EmbeddingMatrix,
    pub pairs: PairDataset,
}

/// A single corpus; equal to the test half of [`synth_split`] with no
/// training rows.
pub fn synth_corpus(
    n: usize,
    d: usize,
    intrinsic: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(EmbeddingMatrix, PairDataset)> {
    let (_, test) = synth_split(0, n, d, intrinsic, noise_sigma, seed)?;
    Ok((test.embeddings, test.pairs))
}

/// Train and test corpora drawn through one shared frame, so a projection
/// fitted on the first transfers to the second.
pub fn synth_split(
    n_train: usize,
    n_test: usize,
    d: usize,
    intrinsic: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<(SynthCorpus, SynthCorpus)> {
    if intrinsic == 0 || d == 0 {
        return Err(StoreError::Shape("dimensions must be positive".into()));
    }
    if intrinsic > d {
        return Err(StoreError::Shape(format!(
            "intrinsic dimension {intrinsic} exceeds embedding dimension {d}"
        )));
    }
    if !n_train.is_multiple_of(2) || !n_test.is_multiple_of(2) {
        return Err(StoreError::Shape("row counts must be even".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(StoreError::Shape(format!(
            "invalid noise sigma {noise_sigma}"
        )));
    }
    let mut rng = RngStream::new(seed);
    let frame = orthonormal_frame(&mut rng, d, intrinsic);
    let train = draw(&mut rng, &frame, n_train, d, intrinsic, noise_sigma)?;
    let test = draw(&mut rng, &frame, n_test, d, intrinsic, noise_sigma)?;
    Ok((train, test))
}

/// `intrinsic` orthonormal vectors of length `d` (Gram-Schmidt applied twice
/// to Gaussian draws).
fn orthonormal_frame(rng: &mut RngStream, d: usize, intrinsic: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(intrinsic);
    while frame.len() < intrinsic {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for u in &frame {
                let p = dot(&v, u);
                v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
            }
        }
        let nv = dot(&v, &v).sqrt();
        if nv < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        frame.push(v);
    }
    frame
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let den = (dot(a, a) * dot(b, b)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        dot(a, b) / den
    }
}

fn draw(
    rng: &mut RngStream,
    frame: &[Vec<f64>],
    n: usize,
    d: usize,
    intrinsic: usize,
    noise_sigma: f64,
) -> Result<SynthCorpus> {
    let mut values = Vec::with_capacity(n * d);
    let mut records = Vec::with_capacity(n / 2);
    for p in 0..n / 2 {
        let first: Vec<f64> = (0..intrinsic).map(|_| rng.normal()).collect();
        let t = rng.uniform(-1.0, 1.0);
        let mut other: Vec<f64> = (0..intrinsic).map(|_| rng.normal()).collect();
        // Remove the component along `first` and rescale to the same norm.
        let nf2 = dot(&first, &first);
        let proj = dot(&other, &first) / nf2;
        other
            .iter_mut()
            .zip(&first)
            .for_each(|(o, f)| *o -= proj * f);
        let no = dot(&other, &other).sqrt();
        let nf = nf2.sqrt();
        let second: Vec<f64> = if no > 1e-12 {
            let w = (1.0 - t * t).sqrt() * nf / no;
            first
                .iter()
                .zip(&other)
                .map(|(f, o)| t * f + w * o)
                .collect()
        } else {
            first.iter().map(|f| t * f).collect()
        };
        for latent in [&first, &second] {
            for i in 0..d {
                let mut v = 0.0;
                for (c, basis) in latent.iter().zip(frame) {
                    v += c * basis[i];
                }
                values.push(v);
            }
            if noise_sigma > 0.0 {
                let start = values.len() - d;
                for v in &mut values[start..] {
                    *v += noise_sigma * rng.normal();
                }
            }
        }
        records.push(PairRecord {
            a: 2 * p,
            b: 2 * p + 1,
            gold: Gold::Score(cosine(&first, &second)),
        });
    }
    Ok(SynthCorpus {
        embeddings: EmbeddingMatrix::new(n, d, values)?,
        pairs: PairDataset::new(LabelKind::Similarity, records)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sentcomp_oracle::{covariance, eigh_power};

    #[test]
    fn noiseless_full_rank_gold_is_row_cosine() {
        let (m, pairs) = synth_corpus(40, 6, 6, 0.0, 9).unwrap();
        for r in pairs.records() {
            let Gold::Score(g) = r.gold else { panic!() };
            let c = cosine(m.row(r.a), m.row(r.b));
            assert!((g - c).abs() <= 1e-12, "{g} vs {c}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = synth_corpus(20, 8, 3, 0.1, 4).unwrap();
        let b = synth_corpus(20, 8, 3, 0.1, 4).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(20, 8, 3, 0.1, 5).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn intrinsic_must_fit() {
        assert!(synth_corpus(10, 4, 5, 0.0, 0).is_err());
        assert!(synth_corpus(11, 4, 2, 0.0, 0).is_err());
    }

    #[test]
    fn noiseless_variance_lives_in_intrinsic_subspace() {
        let (m, _) = synth_corpus(1000, 64, 8, 0.0, 2).unwrap();
        let rows: Vec<Vec<f64>> = m.iter_rows().map(<[f64]>::to_vec).collect();
        let (cov, _) = covariance(&rows);
        let trace: f64 = (0..64).map(|i| cov[i][i]).sum();
        let (top, _) = eigh_power(&cov, 8, 1e-12);
        let share = top.iter().sum::<f64>() / trace;
        assert!(share >= 0.99, "share {share}");
    }

    #[test]
    fn gold_spans_range() {
        let (_, pairs) = synth_corpus(400, 16, 8, 0.05, 1).unwrap();
        let s = pairs.scores().unwrap();
        assert!(s.iter().cloned().fold(f64::INFINITY, f64::min) < -0.8);
        assert!(s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) > 0.8);
    }
}
