//! Task runners and dimension sweeps.
//!
//! A projection is fitted on the training sentences (inductive) or on the
//! training and test sentences together (transductive), then applied to
//! every sentence a task reads. Labels never reach the fitting code.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::probe::{
    accuracy, cosine, fit_probe, pair_features, predict_probe, select_l2, spearman, ProbeError,
    DEFAULT_L2, L2_GRID,
};
use crate::reducers::{fit, transform, Method, ProjectionModel, ReducerConfig, ReducerError};
use crate::store::{
    EmbeddingMatrix, EvalReport, EvalRow, LabelKind, LabeledDataset, PairDataset, Setting,
    StoreError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Reducer(#[from] ReducerError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("{0}")]
    Task(String),
}

impl EvalError {
    pub fn is_usage(&self) -> bool {
        match self {
            EvalError::Reducer(e) => e.is_usage(),
            EvalError::Spec(_) | EvalError::Task(_) => true,
            EvalError::Store(e) => matches!(e, StoreError::Dataset(_) | StoreError::Shape(_)),
            EvalError::Probe(_) => false,
        }
    }
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

pub const METHOD_IDENTITY: &str = "identity";
pub const DEFAULT_DIMS: [usize; 10] = [16, 32, 64, 128, 150, 200, 300, 384, 512, 640];

/// The default grid below `d`, capped by `d` itself.
pub fn default_dims(d: usize) -> Vec<usize> {
    let mut dims: Vec<usize> = DEFAULT_DIMS.iter().copied().filter(|&k| k < d).collect();
    dims.push(d);
    dims
}

/// Inductive: fit on `train`. Transductive: fit on `[train; test]`.
pub fn fit_for_setting(
    cfg: &ReducerConfig,
    train: &EmbeddingMatrix,
    test: &EmbeddingMatrix,
    setting: Setting,
) -> Result<ProjectionModel, ReducerError> {
    if train.dim() != test.dim() {
        return Err(ReducerError::InvalidInput(format!(
            "train has dimension {}, test has {}",
            train.dim(),
            test.dim()
        )));
    }
    match setting {
        Setting::Inductive => fit(cfg, train),
        Setting::Transductive => {
            let union = train
                .vstack(test)
                .map_err(|e| ReducerError::InvalidInput(e.to_string()))?;
            fit(cfg, &union)
        }
    }
}

/// Probe regularisation for the classification tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum L2Choice {
    Fixed(f64),
    /// Pick from [`L2_GRID`] by accuracy on every fifth training record,
    /// then refit on all training records.
    Grid,
}

impl Default for L2Choice {
    fn default() -> Self {
        L2Choice::Fixed(DEFAULT_L2)
    }
}

/// Metric value of one task run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskScore {
    pub metric: &'static str,
    pub value: f64,
    pub transform_seconds: f64,
}

fn project(model: Option<&ProjectionModel>, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    match model {
        Some(m) => Ok(transform(m, x)?),
        None => Ok(x.clone()),
    }
}

/// Projects `a` and, unless it is the same matrix, `b`.
fn project_sides(
    model: Option<&ProjectionModel>,
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
) -> Result<(EmbeddingMatrix, Option<EmbeddingMatrix>, f64)> {
    let start = Instant::now();
    let za = project(model, a)?;
    let zb = if std::ptr::eq(a, b) {
        None
    } else {
        Some(project(model, b)?)
    };
    Ok((za, zb, start.elapsed().as_secs_f64()))
}

/// Spearman correlation between the per-pair cosine of the projected
/// embeddings and the gold scores. `model = None` scores the raw
/// embeddings. Pair indices point into `emb_a` and `emb_b` respectively;
/// pass the same matrix twice when both sides share one.
pub fn run_sts(
    model: Option<&ProjectionModel>,
    emb_a: &EmbeddingMatrix,
    emb_b: &EmbeddingMatrix,
    pairs: &PairDataset,
) -> Result<TaskScore> {
    let gold = pairs
        .scores()
        .ok_or_else(|| EvalError::Task("STS needs similarity scores".into()))?;
    pairs.check_indices(emb_a.rows(), emb_b.rows())?;
    let (za, zb, seconds) = project_sides(model, emb_a, emb_b)?;
    let zb = zb.as_ref().unwrap_or(&za);
    let predicted = pairs
        .records()
        .iter()
        .map(|r| cosine(za.row(r.a), zb.row(r.b)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TaskScore {
        metric: "spearman",
        value: spearman(&predicted, &gold)?,
        transform_seconds: seconds,
    })
}

/// Column-wise z-scoring with statistics taken from the training features.
/// Constant columns are only centred.
struct ZScore {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl ZScore {
    fn fit(x: &EmbeddingMatrix) -> Self {
        let mean = x.column_means();
        let mut var = vec![0.0; x.dim()];
        for row in x.iter_rows() {
            for ((v, m), s) in row.iter().zip(&mean).zip(var.iter_mut()) {
                *s += (v - m) * (v - m);
            }
        }
        let n = x.rows().max(1) as f64;
        let inv_std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, inv_std }
    }

    fn apply(&self, x: &EmbeddingMatrix) -> EmbeddingMatrix {
        let mut values = x.values().to_vec();
        for row in values.chunks_exact_mut(x.dim()) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        EmbeddingMatrix::new(x.rows(), x.dim(), values).expect("finite input stays finite")
    }
}

/// Standardises both feature sets, trains the probe and returns test
/// accuracy.
fn probe_accuracy(
    train: &EmbeddingMatrix,
    train_labels: &[usize],
    test: &EmbeddingMatrix,
    test_labels: &[usize],
    n_classes: usize,
    l2: L2Choice,
) -> Result<f64> {
    let z = ZScore::fit(train);
    let (train, test) = (z.apply(train), z.apply(test));
    let model = match l2 {
        L2Choice::Fixed(l2) => fit_probe(&train, train_labels, n_classes, l2)?,
        L2Choice::Grid => {
            let (fit_idx, dev_idx): (Vec<usize>, Vec<usize>) =
                (0..train.rows()).partition(|i| i % 5 != 4);
            let fit_y: Vec<usize> = fit_idx.iter().map(|&i| train_labels[i]).collect();
            let dev_y: Vec<usize> = dev_idx.iter().map(|&i| train_labels[i]).collect();
            let (l2, _) = select_l2(
                (&train.select_rows(&fit_idx), &fit_y),
                (&train.select_rows(&dev_idx), &dev_y),
                n_classes,
                &L2_GRID,
            )?;
            fit_probe(&train, train_labels, n_classes, l2)?
        }
    };
    Ok(accuracy(&predict_probe(&model, &test)?, test_labels)?)
}

/// Trains a logistic probe on the projected training rows of `emb` and
/// reports accuracy on the projected test rows.
pub fn run_classification(
    model: Option<&ProjectionModel>,
    emb: &EmbeddingMatrix,
    train_labels: &LabeledDataset,
    test_labels: &LabeledDataset,
    l2: L2Choice,
) -> Result<TaskScore> {
    train_labels.check_indices(emb.rows())?;
    test_labels.check_indices(emb.rows())?;
    if train_labels.n_classes() != test_labels.n_classes() {
        return Err(EvalError::Task(format!(
            "train has {} classes, test has {}",
            train_labels.n_classes(),
            test_labels.n_classes()
        )));
    }
    let start = Instant::now();
    let train = project(model, &emb.select_rows(&train_labels.indices()))?;
    let test = project(model, &emb.select_rows(&test_labels.indices()))?;
    let seconds = start.elapsed().as_secs_f64();
    let value = probe_accuracy(
        &train,
        &train_labels.labels(),
        &test,
        &test_labels.labels(),
        train_labels.n_classes(),
        l2,
    )?;
    Ok(TaskScore {
        metric: "accuracy",
        value,
        transform_seconds: seconds,
    })
}

fn pair_matrix(
    za: &EmbeddingMatrix,
    zb: &EmbeddingMatrix,
    pairs: &PairDataset,
) -> Result<EmbeddingMatrix> {
    let rows = pairs
        .records()
        .iter()
        .map(|r| pair_features(za.row(r.a), zb.row(r.b)))
        .collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Ok(EmbeddingMatrix::zeros(0, 2 * za.dim()));
    }
    Ok(EmbeddingMatrix::from_rows(&rows)?)
}

/// Three-way probe on `[u * v, |u - v|]` of the projected premise and
/// hypothesis embeddings.
pub fn run_entailment(
    model: Option<&ProjectionModel>,
    emb_a: &EmbeddingMatrix,
    emb_b: &EmbeddingMatrix,
    train_pairs: &PairDataset,
    test_pairs: &PairDataset,
    l2: L2Choice,
) -> Result<TaskScore> {
    let (Some(train_y), Some(test_y)) = (train_pairs.class_ids(), test_pairs.class_ids()) else {
        return Err(EvalError::Task("entailment needs class labels".into()));
    };
    if train_pairs.kind() != LabelKind::Entailment || test_pairs.kind() != LabelKind::Entailment {
        return Err(EvalError::Task("entailment needs class labels".into()));
    }
    train_pairs.check_indices(emb_a.rows(), emb_b.rows())?;
    test_pairs.check_indices(emb_a.rows(), emb_b.rows())?;
    let (za, zb, seconds) = project_sides(model, emb_a, emb_b)?;
    let zb = zb.as_ref().unwrap_or(&za);
    let train = pair_matrix(&za, zb, train_pairs)?;
    let test = pair_matrix(&za, zb, test_pairs)?;
    let value = probe_accuracy(&train, &train_y, &test, &test_y, 3, l2)?;
    Ok(TaskScore {
        metric: "accuracy",
        value,
        transform_seconds: seconds,
    })
}

/// Inputs of one task. For pair tasks `b = None` means both sides index
/// into `a`.
#[derive(Debug, Clone)]
pub enum TaskData {
    Sts {
        a: EmbeddingMatrix,
        b: Option<EmbeddingMatrix>,
        train: PairDataset,
        test: PairDataset,
    },
    Classification {
        emb: EmbeddingMatrix,
        train: LabeledDataset,
        test: LabeledDataset,
    },
    Entailment {
        a: EmbeddingMatrix,
        b: Option<EmbeddingMatrix>,
        train: PairDataset,
        test: PairDataset,
    },
}

#[derive(Debug, Clone)]
pub struct TaskInputs {
    pub name: String,
    pub data: TaskData,
}

fn unique(indices: impl Iterator<Item = usize>) -> Vec<usize> {
    indices.collect::<BTreeSet<_>>().into_iter().collect()
}

/// Distinct sentences referenced by `pairs`, side `a` first.
fn pair_sentences(
    a: &EmbeddingMatrix,
    b: Option<&EmbeddingMatrix>,
    pairs: &PairDataset,
) -> Result<EmbeddingMatrix> {
    let recs = pairs.records();
    match b {
        None => Ok(a.select_rows(&unique(recs.iter().flat_map(|r| [r.a, r.b])))),
        Some(b) => Ok(a
            .select_rows(&unique(recs.iter().map(|r| r.a)))
            .vstack(&b.select_rows(&unique(recs.iter().map(|r| r.b))))?),
    }
}

impl TaskInputs {
    pub fn dim(&self) -> usize {
        match &self.data {
            TaskData::Sts { a, .. } | TaskData::Entailment { a, .. } => a.dim(),
            TaskData::Classification { emb, .. } => emb.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            TaskData::Sts { a, b, train, test } | TaskData::Entailment { a, b, train, test } => {
                let rows_b = b.as_ref().map_or(a.rows(), EmbeddingMatrix::rows);
                if let Some(b) = b {
                    if b.dim() != a.dim() {
                        return Err(EvalError::Task(format!(
                            "side b has dimension {}, side a has {}",
                            b.dim(),
                            a.dim()
                        )));
                    }
                }
                train.check_indices(a.rows(), rows_b)?;
                test.check_indices(a.rows(), rows_b)?;
            }
            TaskData::Classification { emb, train, test } => {
                train.check_indices(emb.rows())?;
                test.check_indices(emb.rows())?;
            }
        }
        Ok(())
    }

    /// Sentences of the training and test splits, as seen by the reducer.
    pub fn fit_rows(&self) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
        match &self.data {
            TaskData::Sts { a, b, train, test } | TaskData::Entailment { a, b, train, test } => {
                Ok((
                    pair_sentences(a, b.as_ref(), train)?,
                    pair_sentences(a, b.as_ref(), test)?,
                ))
            }
            TaskData::Classification { emb, train, test } => Ok((
                emb.select_rows(&unique(train.indices().into_iter())),
                emb.select_rows(&unique(test.indices().into_iter())),
            )),
        }
    }

    /// Runs the task with `model` (or the raw embeddings).
    pub fn run(&self, model: Option<&ProjectionModel>, l2: L2Choice) -> Result<TaskScore> {
        match &self.data {
            TaskData::Sts { a, b, test, .. } => run_sts(model, a, b.as_ref().unwrap_or(a), test),
            TaskData::Classification { emb, train, test } => {
                run_classification(model, emb, train, test, l2)
            }
            TaskData::Entailment { a, b, train, test } => {
                run_entailment(model, a, b.as_ref().unwrap_or(a), train, test, l2)
            }
        }
    }
}

/// Grid of reducer runs. `base` supplies the method-independent settings
/// (kernel, autoencoder hyperparameters, ...); method, dimension and seed
/// are overwritten per cell.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub dims: Vec<usize>,
    pub settings: Vec<Setting>,
    pub seeds: Vec<u64>,
    pub base: ReducerConfig,
    pub l2: L2Choice,
    /// Evaluate cells on the rayon pool. Timings then include contention.
    pub parallel: bool,
}

impl SweepSpec {
    pub fn new(methods: Vec<Method>, dims: Vec<usize>) -> Self {
        Self {
            methods,
            dims,
            settings: vec![Setting::Inductive, Setting::Transductive],
            seeds: vec![0],
            base: ReducerConfig::new(Method::Pca, 1),
            l2: L2Choice::default(),
            parallel: false,
        }
    }

    pub fn validate(&self, input_dim: usize) -> Result<()> {
        let empty = [
            ("methods", self.methods.is_empty()),
            ("dims", self.dims.is_empty()),
            ("settings", self.settings.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(EvalError::Spec(format!("{name} must not be empty")));
        }
        if self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(EvalError::Spec("dims must be strictly ascending".into()));
        }
        if self.dims[0] == 0 {
            return Err(EvalError::Spec("dims must be positive".into()));
        }
        if let Some(&k) = self.dims.iter().find(|&&k| k > input_dim) {
            return Err(EvalError::Spec(format!(
                "dim {k} exceeds input dimension {input_dim}"
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.methods.len() * self.dims.len() * self.settings.len() * self.seeds.len()
    }
}

struct Cell {
    method: Method,
    dim: usize,
    setting: Setting,
    seed: u64,
}

fn run_cell(
    spec: &SweepSpec,
    task: &TaskInputs,
    train: &EmbeddingMatrix,
    test: &EmbeddingMatrix,
    cell: &Cell,
) -> EvalRow {
    let mut cfg = spec.base.clone();
    cfg.method = cell.method;
    cfg.target_dim = cell.dim;
    cfg.seed = cell.seed;
    let name = cell.method.name();
    let start = Instant::now();
    let outcome = fit_for_setting(&cfg, train, test, cell.setting)
        .map_err(EvalError::from)
        .and_then(|model| {
            let fit_seconds = start.elapsed().as_secs_f64();
            task.run(Some(&model), spec.l2).map(|s| (s, fit_seconds))
        });
    match outcome {
        Ok((score, fit_seconds)) => EvalRow {
            task: task.name.clone(),
            method: name.into(),
            dim: cell.dim,
            setting: Some(cell.setting),
            seed: cell.seed,
            metric: score.metric.into(),
            value: score.value,
            fit_seconds,
            transform_seconds: score.transform_seconds,
        },
        Err(e) => EvalRow::failed(
            &task.name,
            name,
            cell.dim,
            Some(cell.setting),
            cell.seed,
            &e.to_string(),
        ),
    }
}

/// Runs the untransformed baseline and every (method, dim, setting, seed)
/// cell. A failing cell becomes an error row; only invalid specs or task
/// inputs abort the sweep.
pub fn sweep(spec: &SweepSpec, task: &TaskInputs) -> Result<EvalReport> {
    task.validate()?;
    let d = task.dim();
    spec.validate(d)?;
    let (train, test) = task.fit_rows()?;

    let baseline = match task.run(None, spec.l2) {
        Ok(score) => EvalRow {
            task: task.name.clone(),
            method: METHOD_IDENTITY.into(),
            dim: d,
            setting: None,
            seed: 0,
            metric: score.metric.into(),
            value: score.value,
            fit_seconds: 0.0,
            transform_seconds: score.transform_seconds,
        },
        Err(e) => EvalRow::failed(&task.name, METHOD_IDENTITY, d, None, 0, &e.to_string()),
    };

    let mut cells = Vec::with_capacity(spec.cell_count());
    for &method in &spec.methods {
        for &dim in &spec.dims {
            for &setting in &spec.settings {
                for &seed in &spec.seeds {
                    cells.push(Cell {
                        method,
                        dim,
                        setting,
                        seed,
                    });
                }
            }
        }
    }
    let mut rows: Vec<EvalRow> = if spec.parallel {
        cells
            .par_iter()
            .map(|c| run_cell(spec, task, &train, &test, c))
            .collect()
    } else {
        cells
            .iter()
            .map(|c| run_cell(spec, task, &train, &test, c))
            .collect()
    };
    rows.push(baseline);
    let mut report = EvalReport::new(rows);
    report.sort_canonical();
    Ok(report)
}
