//! Gaussian random projection.

use faer::Mat;

use super::{ReducerError, Result};
use crate::linalg::RngStream;
use crate::store::EmbeddingMatrix;

/// `R` is `d x k` with i.i.d. `N(0, 1/k)` entries drawn row-major from
/// `RngStream(seed)`, so it depends only on `(seed, d, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrpModel {
    pub seed: u64,
    pub r: Mat<f64>,
}

impl GrpModel {
    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.r.ncols()
    }

    pub(crate) fn project(&self, x: &EmbeddingMatrix) -> Mat<f64> {
        x.as_mat() * &self.r
    }
}

pub fn fit_grp(d: usize, k: usize, seed: u64) -> Result<GrpModel> {
    if k == 0 || k > d {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim {k} outside [1, {d}]"
        )));
    }
    let mut rng = RngStream::new(seed);
    let scale = 1.0 / (k as f64).sqrt();
    let mut r = Mat::zeros(d, k);
    for i in 0..d {
        for j in 0..k {
            r[(i, j)] = scale * rng.normal();
        }
    }
    Ok(GrpModel { seed, r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reducers::{fit, transform, Method, ProjectionModel, ReducerConfig};
    use sentcomp_oracle::SplitMix;

    #[test]
    fn independent_of_data() {
        let mut rng = SplitMix::new(1);
        let a = EmbeddingMatrix::from_rows(&rng.matrix(5, 6)).unwrap();
        let b = EmbeddingMatrix::from_rows(&rng.matrix(9, 6)).unwrap();
        let cfg = ReducerConfig::new(Method::Grp, 3).with_seed(77);
        assert_eq!(fit(&cfg, &a).unwrap(), fit(&cfg, &b).unwrap());
        assert_ne!(
            fit(&cfg.clone().with_seed(78), &a).unwrap(),
            fit(&cfg, &a).unwrap()
        );
    }

    #[test]
    fn zero_row_maps_to_zero() {
        let m = ProjectionModel::Grp(fit_grp(4, 2, 0).unwrap());
        let y = transform(&m, &EmbeddingMatrix::zeros(1, 4)).unwrap();
        assert_eq!(y.values(), &[0.0, 0.0]);
    }

    #[test]
    fn squared_norm_is_preserved_in_expectation() {
        let d = 150;
        let k = 100;
        let mut unit = vec![0.0; d];
        let mut g = SplitMix::new(3);
        unit.iter_mut().for_each(|v| *v = g.range(-1.0, 1.0));
        let n: f64 = unit.iter().map(|v| v * v).sum::<f64>().sqrt();
        unit.iter_mut().for_each(|v| *v /= n);
        let x = EmbeddingMatrix::new(1, d, unit).unwrap();
        let mean: f64 = (0..200)
            .map(|seed| {
                let m = ProjectionModel::Grp(fit_grp(d, k, seed).unwrap());
                transform(&m, &x)
                    .unwrap()
                    .values()
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / 200.0;
        assert!((0.9..=1.1).contains(&mean), "mean {mean}");
    }
}
