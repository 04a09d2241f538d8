//! Wall-clock timing of reducer fit and transform.
//!
//! Each phase runs `warmup` discarded iterations followed by `repeats`
//! timed ones on the monotonic clock, and reports the median. The fit phase
//! refits from scratch every iteration; the transform phase reuses a single
//! fitted model on the full test matrix. File I/O is never inside a timed
//! region.

use std::fmt;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::reducers::{
    fit, transform, transform_parallel, Method, ProjectionModel, ReducerConfig, ReducerError,
    Result,
};
use crate::store::{EmbeddingMatrix, StoreError};

pub const BENCH_CSV_HEADER: [&str; 7] = [
    "method",
    "phase",
    "n",
    "d",
    "k",
    "repeats",
    "median_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Fit,
    Transform,
    /// Row-chunked transform on the rayon pool.
    TransformParallel,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Fit => "fit",
            Phase::Transform => "transform",
            Phase::TransformParallel => "transform-parallel",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingResult {
    pub method: Method,
    pub phase: Phase,
    /// Median of `samples`.
    pub seconds: f64,
    pub repeats: usize,
    pub warmup: usize,
    /// Rows processed by the phase.
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub samples: Vec<f64>,
}

/// Median, averaging the two middle values for even counts.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of no samples");
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    }
}

fn repeat<T>(
    repeats: usize,
    warmup: usize,
    mut body: impl FnMut() -> Result<T>,
) -> Result<(Vec<f64>, T)> {
    if repeats == 0 {
        return Err(ReducerError::InvalidInput(
            "repeats must be at least 1".into(),
        ));
    }
    let mut last = None;
    let mut samples = Vec::with_capacity(repeats);
    for i in 0..warmup + repeats {
        let start = Instant::now();
        let out = body()?;
        let elapsed = start.elapsed().as_secs_f64();
        if i >= warmup {
            samples.push(elapsed);
        }
        last = Some(out);
    }
    Ok((samples, last.expect("at least one iteration")))
}

fn result(
    cfg: &ReducerConfig,
    phase: Phase,
    samples: Vec<f64>,
    warmup: usize,
    n: usize,
    d: usize,
) -> TimingResult {
    TimingResult {
        method: cfg.method,
        phase,
        seconds: median(&samples),
        repeats: samples.len(),
        warmup,
        n,
        d,
        k: cfg.target_dim,
        samples,
    }
}

/// Times fitting on `train` and transforming `test`.
pub fn time_phase(
    cfg: &ReducerConfig,
    train: &EmbeddingMatrix,
    test: &EmbeddingMatrix,
    repeats: usize,
    warmup: usize,
) -> Result<(TimingResult, TimingResult)> {
    let (fit_samples, model) = repeat(repeats, warmup, || fit(cfg, train))?;
    let (tr_samples, _) = repeat(repeats, warmup, || transform(&model, test))?;
    Ok((
        result(
            cfg,
            Phase::Fit,
            fit_samples,
            warmup,
            train.rows(),
            train.dim(),
        ),
        result(
            cfg,
            Phase::Transform,
            tr_samples,
            warmup,
            test.rows(),
            test.dim(),
        ),
    ))
}

/// Times the parallel transform path of an already fitted model.
pub fn time_parallel_transform(
    cfg: &ReducerConfig,
    model: &ProjectionModel,
    test: &EmbeddingMatrix,
    chunk_rows: usize,
    repeats: usize,
    warmup: usize,
) -> Result<TimingResult> {
    let (samples, _) = repeat(repeats, warmup, || {
        transform_parallel(model, test, chunk_rows)
    })?;
    Ok(result(
        cfg,
        Phase::TransformParallel,
        samples,
        warmup,
        test.rows(),
        test.dim(),
    ))
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    phase: &'a str,
    n: usize,
    d: usize,
    k: usize,
    repeats: usize,
    median_seconds: f64,
}

pub fn write_bench_csv<W: Write>(results: &[TimingResult], w: W) -> Result<(), StoreError> {
    let mut out = csv::Writer::from_writer(w);
    let res: Result<(), csv::Error> = (|| {
        if results.is_empty() {
            out.write_record(BENCH_CSV_HEADER)?;
        }
        for r in results {
            out.serialize(CsvRow {
                method: r.method.name(),
                phase: r.phase.name(),
                n: r.n,
                d: r.d,
                k: r.k,
                repeats: r.repeats,
                median_seconds: r.seconds,
            })?;
        }
        out.flush()?;
        Ok(())
    })();
    res.map_err(|e| StoreError::Io {
        path: "<bench csv>".into(),
        source: std::io::Error::other(e),
    })
}
