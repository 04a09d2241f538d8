//! Single-hidden-layer autoencoder.
//!
//! Encoder `h = tanh(W1 (x - mean) + b1)`, decoder `x^ = W2 h + b2`, trained
//! on the mean squared reconstruction error of the centred input (averaged
//! over rows and coordinates) with mini-batch Adam. Only the encoder is
//! needed to project.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use super::{ReducerError, Result};
use crate::linalg::{clear_vector_state, RngStream};
use crate::store::EmbeddingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AeOptimizer {
    Adam,
    /// Plain gradient steps, `theta -= lr * g`.
    Sgd,
}

impl std::str::FromStr for AeOptimizer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "adam" => Ok(AeOptimizer::Adam),
            "sgd" => Ok(AeOptimizer::Sgd),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeHyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub optimizer: AeOptimizer,
}

impl Default for AeHyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            epochs: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            optimizer: AeOptimizer::Adam,
        }
    }
}

impl AeHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ReducerError::InvalidInput(format!(
                    "autoencoder {name} must be positive, got {v}"
                )));
            }
        }
        if self.adam_beta1 >= 1.0 || self.adam_beta2 >= 1.0 {
            return Err(ReducerError::InvalidInput(
                "adam decay rates must be below 1".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ReducerError::InvalidInput(
                "autoencoder batch_size and epochs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Flat parameter vector: `w1` (`k x d`, column-major), `b1`, `w2`
/// (`d x k`, column-major), `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AeParams {
    pub d: usize,
    pub k: usize,
    pub flat: Vec<f64>,
}

impl AeParams {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            d,
            k,
            flat: vec![0.0; 2 * d * k + d + k],
        }
    }

    fn offsets(&self) -> [usize; 4] {
        let dk = self.d * self.k;
        [0, dk, dk + self.k, 2 * dk + self.k]
    }

    pub fn w1(&self) -> MatRef<'_, f64> {
        let [o, ..] = self.offsets();
        MatRef::from_column_major_slice(&self.flat[o..o + self.d * self.k], self.k, self.d)
    }

    pub fn b1(&self) -> &[f64] {
        let [_, o, ..] = self.offsets();
        &self.flat[o..o + self.k]
    }

    pub fn w2(&self) -> MatRef<'_, f64> {
        let [_, _, o, _] = self.offsets();
        MatRef::from_column_major_slice(&self.flat[o..o + self.d * self.k], self.d, self.k)
    }

    pub fn b2(&self) -> &[f64] {
        let [.., o] = self.offsets();
        &self.flat[o..o + self.d]
    }

    fn parts_mut(&mut self) -> (MatMut<'_, f64>, &mut [f64], MatMut<'_, f64>, &mut [f64]) {
        let (d, k) = (self.d, self.k);
        let (w1, rest) = self.flat.split_at_mut(d * k);
        let (b1, rest) = rest.split_at_mut(k);
        let (w2, b2) = rest.split_at_mut(d * k);
        (
            MatMut::from_column_major_slice_mut(w1, k, d),
            b1,
            MatMut::from_column_major_slice_mut(w2, d, k),
            b2,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    /// `k x d`
    pub w1: Mat<f64>,
    pub b1: Vec<f64>,
    /// `d x k`
    pub w2: Mat<f64>,
    pub b2: Vec<f64>,
    /// Training mean, subtracted before encoding.
    pub mean: Vec<f64>,
}

impl AutoencoderModel {
    fn from_params(p: &AeParams, mean: Vec<f64>) -> Self {
        Self {
            w1: p.w1().to_owned(),
            b1: p.b1().to_vec(),
            w2: p.w2().to_owned(),
            b2: p.b2().to_vec(),
            mean,
        }
    }

    pub(crate) fn project(&self, x: &EmbeddingMatrix) -> Mat<f64> {
        // tanh(W1 (x - mean) + b1) = tanh(W1 x + (b1 - W1 mean))
        let k = self.b1.len();
        let shift: Vec<f64> = (0..k)
            .map(|c| {
                self.b1[c]
                    - (0..self.mean.len())
                        .map(|j| self.w1[(c, j)] * self.mean[j])
                        .sum::<f64>()
            })
            .collect();
        let mut h = x.as_mat() * self.w1.transpose();
        clear_vector_state();
        for c in 0..k {
            for i in 0..h.nrows() {
                h[(i, c)] = (h[(i, c)] + shift[c]).tanh();
            }
        }
        h
    }

    /// Decoder output for already encoded rows, in the original (uncentred)
    /// coordinates.
    pub fn reconstruct(&self, codes: &EmbeddingMatrix) -> Mat<f64> {
        let out = codes.as_mat() * self.w2.transpose();
        Mat::from_fn(out.nrows(), out.ncols(), |i, j| {
            out[(i, j)] + self.b2[j] + self.mean[j]
        })
    }
}

/// Per-step losses (before each update) and per-epoch mean losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Loss and gradient for one batch of centred rows (`B x d`).
pub fn ae_loss_and_gradient(params: &AeParams, batch: MatRef<'_, f64>) -> (f64, AeParams) {
    let (b, d, k) = (batch.nrows(), params.d, params.k);
    let mut h = Mat::<f64>::zeros(b, k);
    matmul(
        h.as_mut(),
        Accum::Replace,
        batch,
        params.w1().transpose(),
        1.0,
        Par::Seq,
    );
    let b1 = params.b1();
    clear_vector_state();
    for c in 0..k {
        for i in 0..b {
            h[(i, c)] = (h[(i, c)] + b1[c]).tanh();
        }
    }
    let mut g = Mat::<f64>::zeros(b, d);
    matmul(
        g.as_mut(),
        Accum::Replace,
        h.as_ref(),
        params.w2().transpose(),
        1.0,
        Par::Seq,
    );
    let b2 = params.b2();
    let scale = 2.0 / (b * d) as f64;
    let mut loss = 0.0;
    for j in 0..d {
        for i in 0..b {
            let r = g[(i, j)] + b2[j] - batch[(i, j)];
            loss += r * r;
            g[(i, j)] = scale * r;
        }
    }
    loss /= (b * d) as f64;

    let mut grad = AeParams::zeros(d, k);
    let mut dh = Mat::<f64>::zeros(b, k);
    matmul(
        dh.as_mut(),
        Accum::Replace,
        g.as_ref(),
        params.w2(),
        1.0,
        Par::Seq,
    );
    for c in 0..k {
        for i in 0..b {
            let t = h[(i, c)];
            dh[(i, c)] *= 1.0 - t * t;
        }
    }
    {
        let (gw1, gb1, gw2, gb2) = grad.parts_mut();
        matmul(
            gw2,
            Accum::Replace,
            g.transpose(),
            h.as_ref(),
            1.0,
            Par::Seq,
        );
        matmul(gw1, Accum::Replace, dh.transpose(), batch, 1.0, Par::Seq);
        for (j, slot) in gb2.iter_mut().enumerate() {
            *slot = (0..b).map(|i| g[(i, j)]).sum();
        }
        for (c, slot) in gb1.iter_mut().enumerate() {
            *slot = (0..b).map(|i| dh[(i, c)]).sum();
        }
    }
    (loss, grad)
}

fn glorot(rng: &mut RngStream, d: usize, k: usize) -> AeParams {
    let mut p = AeParams::zeros(d, k);
    let bound = (6.0 / (d + k) as f64).sqrt();
    let [_, b1, w2, b2] = p.offsets();
    for v in p.flat[..b1].iter_mut() {
        *v = rng.uniform(-bound, bound);
    }
    for v in p.flat[w2..b2].iter_mut() {
        *v = rng.uniform(-bound, bound);
    }
    p
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

pub fn fit_autoencoder(
    x: &EmbeddingMatrix,
    k: usize,
    hp: &AeHyperparams,
    seed: u64,
) -> Result<AutoencoderModel> {
    train_autoencoder(x, k, hp, seed).map(|(m, _)| m)
}

pub fn train_autoencoder(
    x: &EmbeddingMatrix,
    k: usize,
    hp: &AeHyperparams,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingTrace)> {
    hp.validate()?;
    let (n, d) = (x.rows(), x.dim());
    if n < 2 {
        return Err(ReducerError::InvalidInput(format!(
            "autoencoder needs at least 2 rows, got {n}"
        )));
    }
    if k == 0 || k > d {
        return Err(ReducerError::InvalidInput(format!(
            "target_dim {k} outside [1, {d}]"
        )));
    }
    let mean = x.column_means();
    let centred = Mat::from_fn(n, d, |i, j| x.row(i)[j] - mean[j]);

    let mut rng = RngStream::new(seed);
    let mut params = glorot(&mut rng, d, k);
    let mut adam = Adam {
        m: vec![0.0; params.flat.len()],
        v: vec![0.0; params.flat.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let batch = hp.batch_size.min(n);
    let mut trace = TrainingTrace::default();

    for epoch in 0..hp.epochs {
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut steps = 0;
        for (step, chunk) in order.chunks(batch).enumerate() {
            let xb = Mat::from_fn(chunk.len(), d, |i, j| centred[(chunk[i], j)]);
            let (loss, grad) = ae_loss_and_gradient(&params, xb.as_ref());
            if !loss.is_finite() || grad.flat.iter().any(|g| !g.is_finite()) {
                return Err(ReducerError::Diverged { epoch, step });
            }
            trace.step_losses.push(loss);
            epoch_loss += loss;
            steps += 1;
            match hp.optimizer {
                AeOptimizer::Sgd => {
                    for (p, g) in params.flat.iter_mut().zip(&grad.flat) {
                        *p -= hp.learning_rate * g;
                    }
                }
                AeOptimizer::Adam => {
                    adam.t += 1;
                    let (b1, b2) = (hp.adam_beta1, hp.adam_beta2);
                    let c1 = 1.0 - b1.powi(adam.t);
                    let c2 = 1.0 - b2.powi(adam.t);
                    for (((p, g), m), v) in params
                        .flat
                        .iter_mut()
                        .zip(&grad.flat)
                        .zip(adam.m.iter_mut())
                        .zip(adam.v.iter_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        *p -= hp.learning_rate * (*m / c1) / ((*v / c2).sqrt() + hp.adam_eps);
                    }
                }
            }
            if params.flat.iter().any(|p| !p.is_finite()) {
                return Err(ReducerError::Diverged { epoch, step });
            }
        }
        trace.epoch_losses.push(epoch_loss / steps as f64);
    }
    Ok((AutoencoderModel::from_params(&params, mean), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reducers::{transform, ProjectionModel};
    use sentcomp_oracle::{central_gradient, max_relative_error, SplitMix};

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = SplitMix::new(5);
        let (d, k) = (4, 2);
        let batch = Mat::from_fn(5, d, |_, _| rng.range(-1.0, 1.0));
        let mut params = AeParams::zeros(d, k);
        params
            .flat
            .iter_mut()
            .for_each(|p| *p = rng.range(-0.8, 0.8));
        let (_, grad) = ae_loss_and_gradient(&params, batch.as_ref());
        let numeric = central_gradient(
            |flat| {
                let p = AeParams {
                    d,
                    k,
                    flat: flat.to_vec(),
                };
                ae_loss_and_gradient(&p, batch.as_ref()).0
            },
            &params.flat,
            1e-5,
        );
        let err = max_relative_error(&grad.flat, &numeric, 1e-6);
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn full_batch_gradient_descent_is_monotone() {
        let mut rng = SplitMix::new(9);
        let x = EmbeddingMatrix::from_rows(&rng.matrix(40, 6)).unwrap();
        let hp = AeHyperparams {
            learning_rate: 1e-4,
            batch_size: 40,
            epochs: 50,
            optimizer: AeOptimizer::Sgd,
            ..AeHyperparams::default()
        };
        let (_, trace) = train_autoencoder(&x, 3, &hp, 1).unwrap();
        assert_eq!(trace.step_losses.len(), 50);
        for w in trace.step_losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn low_rank_small_signal_is_reconstructed() {
        // rank-3 data in 12 dimensions, entries within +-0.1
        let mut rng = SplitMix::new(14);
        let (n, d, k) = (4096, 12, 3);
        let basis = rng.matrix(k, d);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..k).map(|_| rng.range(-1.0, 1.0)).collect();
                (0..d)
                    .map(|j| 0.03 * (0..k).map(|c| z[c] * basis[c][j]).sum::<f64>())
                    .collect()
            })
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        assert!(x.values().iter().all(|v| v.abs() <= 0.1));
        let model = fit_autoencoder(&x, k, &AeHyperparams::default(), 3).unwrap();
        let codes = transform(&ProjectionModel::Autoencoder(model.clone()), &x).unwrap();
        let rec = model.reconstruct(&codes);
        let mean = x.column_means();
        let mut mse = 0.0;
        let mut var = 0.0;
        for i in 0..n {
            for j in 0..d {
                mse += (rec[(i, j)] - x.row(i)[j]).powi(2);
                var += (x.row(i)[j] - mean[j]).powi(2);
            }
        }
        assert!(mse <= 1e-3 * var, "mse {mse} variance {var}");
    }

    #[test]
    fn default_training_stays_finite_on_standardized_input() {
        let mut rng = SplitMix::new(21);
        let raw = rng.matrix(600, 16);
        let n = raw.len() as f64;
        let mut z = raw.clone();
        for j in 0..16 {
            let mean = raw.iter().map(|r| r[j]).sum::<f64>() / n;
            let sd = (raw.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
            z.iter_mut().for_each(|r| r[j] = (r[j] - mean) / sd);
        }
        let x = EmbeddingMatrix::from_rows(&z).unwrap();
        let (_, trace) = train_autoencoder(&x, 4, &AeHyperparams::default(), 2).unwrap();
        assert_eq!(trace.epoch_losses.len(), 100);
        assert!(trace.step_losses.iter().all(|l| l.is_finite()));
        assert!(trace.epoch_losses[99] < trace.epoch_losses[0]);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = SplitMix::new(2);
        let x = EmbeddingMatrix::from_rows(&rng.matrix(30, 5)).unwrap();
        let hp = AeHyperparams {
            epochs: 4,
            batch_size: 8,
            ..AeHyperparams::default()
        };
        let a = fit_autoencoder(&x, 2, &hp, 7).unwrap();
        let b = fit_autoencoder(&x, 2, &hp, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = SplitMix::new(2);
        let rows: Vec<Vec<f64>> = rng
            .matrix(20, 4)
            .into_iter()
            .map(|r| r.into_iter().map(|v| v * 1e160).collect())
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let hp = AeHyperparams {
            epochs: 3,
            ..AeHyperparams::default()
        };
        assert!(matches!(
            fit_autoencoder(&x, 2, &hp, 0),
            Err(ReducerError::Diverged { .. })
        ));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let hp = AeHyperparams {
            epochs: 0,
            ..AeHyperparams::default()
        };
        assert!(hp.validate().is_err());
        let hp = AeHyperparams {
            adam_beta1: 1.0,
            ..AeHyperparams::default()
        };
        assert!(hp.validate().is_err());
    }
}
