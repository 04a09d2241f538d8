//! Evaluation maths: cosine similarity, Spearman correlation, pair features
//! and a multinomial logistic-regression probe.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use thiserror::Error;

use crate::linalg::clear_vector_state;
use crate::store::EmbeddingMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("constant input: correlation undefined")]
    Constant,
    #[error("non-finite input")]
    NonFinite,
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
}

pub type Result<T, E = ProbeError> = std::result::Result<T, E>;

/// `u.v / (|u| |v|)`, or 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(ProbeError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Ok(0.0);
    }
    Ok((uv / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties replaced by the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(ProbeError::Constant);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ProbeError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(ProbeError::TooShort(a.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(ProbeError::NonFinite);
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// `[u * v, |u - v|]`, symmetric in its arguments.
pub fn pair_features(u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if u.len() != v.len() {
        return Err(ProbeError::DimensionMismatch(u.len(), v.len()));
    }
    let mut out = Vec::with_capacity(2 * u.len());
    out.extend(u.iter().zip(v).map(|(a, b)| a * b));
    out.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
    Ok(out)
}

pub const PROBE_MAX_ITERS: usize = 2000;
pub const PROBE_GRAD_TOL: f64 = 1e-6;
pub const DEFAULT_L2: f64 = 1e-4;
pub const L2_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `C x f`
    pub weights: Mat<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

impl ProbeModel {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn n_features(&self) -> usize {
        self.weights.ncols()
    }

    fn logits(&self, features: MatRef<'_, f64>) -> Mat<f64> {
        let mut z = Mat::zeros(features.nrows(), self.n_classes());
        matmul(
            z.as_mut(),
            Accum::Replace,
            features,
            self.weights.transpose(),
            1.0,
            Par::Seq,
        );
        for c in 0..self.n_classes() {
            for i in 0..z.nrows() {
                z[(i, c)] += self.bias[c];
            }
        }
        z
    }
}

/// Mean softmax cross-entropy plus `(l2 / 2) |W|_F^2`, and its gradient
/// with respect to `(W, b)`.
pub fn probe_objective(
    model: &ProbeModel,
    features: MatRef<'_, f64>,
    labels: &[usize],
) -> (f64, Mat<f64>, Vec<f64>) {
    let n = features.nrows();
    let c = model.n_classes();
    let mut z = model.logits(features);
    clear_vector_state();
    let mut loss = 0.0;
    for i in 0..n {
        let max = (0..c).fold(f64::NEG_INFINITY, |m, j| m.max(z[(i, j)]));
        let sum: f64 = (0..c).map(|j| (z[(i, j)] - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - z[(i, labels[i])];
        for j in 0..c {
            let p = (z[(i, j)] - log_norm).exp();
            let y = if j == labels[i] { 1.0 } else { 0.0 };
            z[(i, j)] = (p - y) / n as f64;
        }
    }
    loss /= n as f64;
    let wsq: f64 = (0..c)
        .flat_map(|a| (0..model.n_features()).map(move |b| (a, b)))
        .map(|(a, b)| model.weights[(a, b)].powi(2))
        .sum();
    loss += 0.5 * model.l2 * wsq;

    let mut gw = Mat::zeros(c, model.n_features());
    matmul(
        gw.as_mut(),
        Accum::Replace,
        z.transpose(),
        features,
        1.0,
        Par::Seq,
    );
    for a in 0..c {
        for b in 0..model.n_features() {
            gw[(a, b)] += model.l2 * model.weights[(a, b)];
        }
    }
    let gb = (0..c).map(|j| (0..n).map(|i| z[(i, j)]).sum()).collect();
    (loss, gw, gb)
}

/// Per-iteration trace of a probe fit.
#[derive(Debug, Clone, Default)]
pub struct ProbeTrace {
    pub objective: Vec<f64>,
    pub grad_inf_norm: Vec<f64>,
}

pub fn fit_probe(
    features: &EmbeddingMatrix,
    labels: &[usize],
    n_classes: usize,
    l2: f64,
) -> Result<ProbeModel> {
    fit_probe_traced(features, labels, n_classes, l2).map(|(m, _)| m)
}

/// Full-batch gradient descent from zero. Each step starts at length 1 and
/// halves until the Armijo condition holds; iteration stops when the
/// gradient's infinity norm reaches [`PROBE_GRAD_TOL`], after
/// [`PROBE_MAX_ITERS`] steps, or when no halving decreases the objective.
pub fn fit_probe_traced(
    features: &EmbeddingMatrix,
    labels: &[usize],
    n_classes: usize,
    l2: f64,
) -> Result<(ProbeModel, ProbeTrace)> {
    let n = features.rows();
    if labels.len() != n {
        return Err(ProbeError::LengthMismatch(n, labels.len()));
    }
    if n_classes < 2 {
        return Err(ProbeError::DegenerateLabels(format!("{n_classes} classes")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ProbeError::DegenerateLabels(format!(
            "label {bad} outside [0, {n_classes})"
        )));
    }
    let mut seen = vec![false; n_classes];
    labels.iter().for_each(|&l| seen[l] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(ProbeError::DegenerateLabels(
            "fewer than 2 distinct labels".into(),
        ));
    }
    if n < n_classes {
        return Err(ProbeError::DegenerateLabels(format!(
            "{n} samples for {n_classes} classes"
        )));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(ProbeError::DegenerateLabels(format!("invalid l2 {l2}")));
    }
    let f = features.dim();
    let x = features.as_mat();
    let mut model = ProbeModel {
        weights: Mat::zeros(n_classes, f),
        bias: vec![0.0; n_classes],
        l2,
    };
    let mut trace = ProbeTrace::default();
    let (mut obj, mut gw, mut gb) = probe_objective(&model, x, labels);
    for _ in 0..PROBE_MAX_ITERS {
        let mut gnorm = gb.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
        let mut gsq: f64 = gb.iter().map(|g| g * g).sum();
        for a in 0..n_classes {
            for b in 0..f {
                gnorm = gnorm.max(gw[(a, b)].abs());
                gsq += gw[(a, b)] * gw[(a, b)];
            }
        }
        trace.objective.push(obj);
        trace.grad_inf_norm.push(gnorm);
        if gnorm <= PROBE_GRAD_TOL {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = model.clone();
            for a in 0..n_classes {
                for b in 0..f {
                    trial.weights[(a, b)] -= step * gw[(a, b)];
                }
                trial.bias[a] -= step * gb[a];
            }
            let (t_obj, t_gw, t_gb) = probe_objective(&trial, x, labels);
            if t_obj.is_finite() && t_obj <= obj - 0.5 * step * gsq {
                accepted = Some((trial, t_obj, t_gw, t_gb));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((m, o, w, b)) => {
                model = m;
                obj = o;
                gw = w;
                gb = b;
            }
            None => break,
        }
    }
    Ok((model, trace))
}

/// Arg-max class per row; ties go to the lowest class id.
pub fn predict_probe(model: &ProbeModel, features: &EmbeddingMatrix) -> Result<Vec<usize>> {
    if features.dim() != model.n_features() {
        return Err(ProbeError::DimensionMismatch(
            model.n_features(),
            features.dim(),
        ));
    }
    if features.rows() == 0 {
        return Ok(Vec::new());
    }
    let z = model.logits(features.as_mat());
    Ok((0..z.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..model.n_classes() {
                if z[(i, c)] > z[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], gold: &[usize]) -> Result<f64> {
    if predicted.len() != gold.len() {
        return Err(ProbeError::LengthMismatch(predicted.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(ProbeError::TooShort(0));
    }
    let hits = predicted.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Picks the grid value with the best dev accuracy (earliest on ties) and
/// returns it with the probe trained at that strength.
pub fn select_l2(
    train: (&EmbeddingMatrix, &[usize]),
    dev: (&EmbeddingMatrix, &[usize]),
    n_classes: usize,
    grid: &[f64],
) -> Result<(f64, ProbeModel)> {
    let mut best: Option<(f64, f64, ProbeModel)> = None;
    for &l2 in grid {
        let model = fit_probe(train.0, train.1, n_classes, l2)?;
        let acc = accuracy(&predict_probe(&model, dev.0)?, dev.1)?;
        if best.as_ref().is_none_or(|(a, _, _)| acc > *a) {
            best = Some((acc, l2, model));
        }
    }
    best.map(|(_, l2, m)| (l2, m))
        .ok_or_else(|| ProbeError::DegenerateLabels("empty l2 grid".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sentcomp_oracle::{central_gradient, max_relative_error, SplitMix};

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[0.3, -2.0], &[0.3, -2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&a, &[2.0, 4.0, 6.0, 9.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&a, &[9.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-15);
        let tie = spearman(&[1.0, 2.0, 2.0, 3.0], &a).unwrap();
        assert!((tie - sentcomp_oracle::spearman(&[1.0, 2.0, 2.0, 3.0], &a)).abs() < 1e-12);
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 3.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
    }

    #[test]
    fn spearman_errors() {
        assert_eq!(spearman(&[1.0], &[1.0]), Err(ProbeError::TooShort(1)));
        assert_eq!(
            spearman(&[1.0, 2.0], &[1.0]),
            Err(ProbeError::LengthMismatch(2, 1))
        );
        assert_eq!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(ProbeError::Constant)
        );
        assert_eq!(
            spearman(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(ProbeError::NonFinite)
        );
    }

    #[test]
    fn pair_feature_examples() {
        assert_eq!(
            pair_features(&[1.0, 2.0], &[3.0, -1.0]).unwrap(),
            vec![3.0, -2.0, 2.0, 3.0]
        );
        let same = pair_features(&[0.5, -4.0], &[0.5, -4.0]).unwrap();
        assert_eq!(&same[2..], &[0.0, 0.0]);
        assert_eq!(
            pair_features(&[1.0, 7.0], &[-2.0, 0.5]).unwrap(),
            pair_features(&[-2.0, 0.5], &[1.0, 7.0]).unwrap()
        );
    }

    fn clusters(
        seed: u64,
        n: usize,
        f: usize,
        c: usize,
        spread: f64,
    ) -> (EmbeddingMatrix, Vec<usize>) {
        let mut rng = SplitMix::new(seed);
        let centres = rng.matrix(c, f);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let l = i % c;
            rows.push(
                centres[l]
                    .iter()
                    .map(|m| 4.0 * m + spread * rng.range(-1.0, 1.0))
                    .collect::<Vec<f64>>(),
            );
            labels.push(l);
        }
        (EmbeddingMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, labels) = clusters(3, 10, 3, 3, 2.0);
        let mut rng = SplitMix::new(8);
        let c = 3;
        let f = 3;
        let flat: Vec<f64> = (0..c * f + c).map(|_| rng.range(-0.5, 0.5)).collect();
        let unpack = |flat: &[f64]| ProbeModel {
            weights: Mat::from_fn(c, f, |a, b| flat[a * f + b]),
            bias: flat[c * f..].to_vec(),
            l2: 0.3,
        };
        let (_, gw, gb) = probe_objective(&unpack(&flat), x.as_mat(), &labels);
        let mut analytic: Vec<f64> = (0..c * f).map(|i| gw[(i / f, i % f)]).collect();
        analytic.extend(gb);
        let numeric = central_gradient(
            |p| probe_objective(&unpack(p), x.as_mat(), &labels).0,
            &flat,
            1e-5,
        );
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err <= 1e-5, "max relative error {err}");
    }

    #[test]
    fn separable_clusters_fit_perfectly() {
        let (x, labels) = clusters(5, 60, 4, 2, 0.5);
        let (model, trace) = fit_probe_traced(&x, &labels, 2, 1e-4).unwrap();
        assert_eq!(predict_probe(&model, &x).unwrap(), labels);
        assert!(trace.objective.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, labels) = clusters(6, 45, 3, 3, 3.0);
        let weak = fit_probe(&x, &labels, 3, 1e-4).unwrap();
        let strong = fit_probe(&x, &labels, 3, 1.0).unwrap();
        assert!(strong.weights.norm_l2() < weak.weights.norm_l2());
    }

    #[test]
    fn zero_model_predicts_first_class() {
        let model = ProbeModel {
            weights: Mat::zeros(3, 2),
            bias: vec![0.0; 3],
            l2: 0.0,
        };
        let x = EmbeddingMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        assert_eq!(predict_probe(&model, &x).unwrap(), vec![0, 0]);
    }

    #[test]
    fn logit_shift_leaves_predictions() {
        let (x, labels) = clusters(7, 30, 3, 3, 1.0);
        let model = fit_probe(&x, &labels, 3, 1e-3).unwrap();
        let mut shifted = model.clone();
        shifted.bias.iter_mut().for_each(|b| *b += 17.5);
        assert_eq!(
            predict_probe(&model, &x).unwrap(),
            predict_probe(&shifted, &x).unwrap()
        );
    }

    #[test]
    fn degenerate_labels_rejected() {
        let x = EmbeddingMatrix::zeros(4, 2);
        assert!(fit_probe(&x, &[1, 1, 1, 1], 2, 1e-4).is_err());
        assert!(fit_probe(&x, &[0, 1, 0, 1], 1, 1e-4).is_err());
        assert!(fit_probe(&x, &[0, 1, 0], 2, 1e-4).is_err());
    }

    #[test]
    fn grid_selection_runs() {
        let (x, labels) = clusters(9, 40, 3, 2, 1.0);
        let (l2, model) = select_l2((&x, &labels), (&x, &labels), 2, &L2_GRID).unwrap();
        assert!(L2_GRID.contains(&l2));
        assert_eq!(model.l2, l2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn spearman_symmetric_and_monotone_invariant(
                a in proptest::collection::vec(0.01f64..100.0, 3..40),
                b_seed in any::<u64>(),
            ) {
                let mut rng = SplitMix::new(b_seed);
                let b: Vec<f64> = a.iter().map(|_| rng.range(0.01, 100.0)).collect();
                prop_assume!(a.iter().any(|&v| v != a[0]));
                let r = spearman(&a, &b).unwrap();
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert_eq!(r, spearman(&b, &a).unwrap());
                let cubed: Vec<f64> = a.iter().map(|v| v.powi(3)).collect();
                prop_assert!((spearman(&cubed, &b).unwrap() - r).abs() <= 1e-12);
            }

            #[test]
            fn cosine_bounded(
                u in proptest::collection::vec(-1e3f64..1e3, 1..10),
                seed in any::<u64>(),
            ) {
                let mut rng = SplitMix::new(seed);
                let v: Vec<f64> = u.iter().map(|_| rng.range(-1e3, 1e3)).collect();
                let c = cosine(&u, &v).unwrap();
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
