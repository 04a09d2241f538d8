//! `sentcomp`: fit, apply and evaluate sentence-embedding reducers.
//!
//! Exit codes: 0 on success, 1 on runtime failures, 2 on usage errors.

mod args;
mod config;
mod error;
mod plot;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sentcomp::bench::{time_parallel_transform, time_phase, write_bench_csv};
use sentcomp::eval::{
    default_dims, fit_for_setting, sweep, L2Choice, SweepSpec, TaskData, TaskInputs,
    METHOD_IDENTITY,
};
use sentcomp::reducers::{
    fit, load_model, save_model, transform, Method, ProjectionModel, ReducerError,
};
use sentcomp::store::{
    load_embeddings, load_labels, load_pairs, save_embeddings, save_pairs, synth_split,
    EmbeddingMatrix, EvalReport, EvalRow, Format, LabelKind, PairDataset, PairRecord,
};

use args::{parse_l2, parse_method, ProjectionArgs, TuningArgs};
use config::{SweepConfig, TaskKind};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "sentcomp",
    version,
    about = "Compress pre-computed sentence embeddings and evaluate the result"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a reducer and write it as a PRJ1 model file.
    Fit(FitArgs),
    /// Project an embedding matrix with a fitted model.
    Transform(TransformArgs),
    /// Spearman correlation of pair cosines against gold similarity scores.
    EvalSts(EvalStsArgs),
    /// Logistic-probe accuracy on single-sentence class labels.
    EvalCls(EvalClsArgs),
    /// Logistic-probe accuracy on entailment pairs.
    EvalNli(EvalNliArgs),
    /// Run a methods x dims x settings x seeds grid from a config file.
    Sweep(SweepArgs),
    /// Median wall-clock fit and transform times.
    Bench(BenchArgs),
    /// Generate a synthetic corpus with known intrinsic dimension.
    Synth(SynthArgs),
    /// Render a sweep report CSV as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// pca, svd, kpca, grp or autoencoder.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Target dimension k.
    #[arg(long)]
    dim: usize,
    /// Training embeddings (EMB1, or TSV/CSV by extension).
    #[arg(long)]
    train: PathBuf,
    /// Extra unlabelled rows appended to the fit data (transductive setting).
    #[arg(long)]
    extra: Option<PathBuf>,
    /// Output model path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// PRJ1 model file.
    #[arg(long)]
    model: PathBuf,
    /// Embeddings to project.
    #[arg(long)]
    input: PathBuf,
    /// Output EMB1 path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Report CSV path [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as JSON lines.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalStsArgs {
    /// Sentence embeddings; pair indices point here unless --emb-b is given.
    #[arg(long)]
    emb: PathBuf,
    /// Embeddings of the second sentence of each pair.
    #[arg(long)]
    emb_b: Option<PathBuf>,
    /// Test pairs: `index_a<TAB>index_b<TAB>score`.
    #[arg(long)]
    pairs: PathBuf,
    /// Training pairs; their sentences are the inductive fit data.
    #[arg(long)]
    train_pairs: Option<PathBuf>,
    /// Task column of the report.
    #[arg(long, default_value = "sts")]
    name: String,
    #[command(flatten)]
    projection: ProjectionArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct EvalClsArgs {
    /// Sentence embeddings; label files index into it.
    #[arg(long)]
    emb: PathBuf,
    /// Training labels: `index<TAB>label`.
    #[arg(long)]
    train_labels: PathBuf,
    /// Test labels: `index<TAB>label`.
    #[arg(long)]
    test_labels: PathBuf,
    /// Probe L2 strength, or `grid` to select on a dev split.
    #[arg(long, default_value = "1e-4", value_parser = parse_l2)]
    l2: L2Choice,
    #[arg(long, default_value = "cls")]
    name: String,
    #[command(flatten)]
    projection: ProjectionArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct EvalNliArgs {
    /// Premise embeddings (and hypotheses unless --emb-b is given).
    #[arg(long)]
    emb: PathBuf,
    /// Hypothesis embeddings.
    #[arg(long)]
    emb_b: Option<PathBuf>,
    /// Training pairs: `index_a<TAB>index_b<TAB>label`.
    #[arg(long)]
    train_pairs: PathBuf,
    /// Test pairs.
    #[arg(long)]
    test_pairs: PathBuf,
    /// Probe L2 strength, or `grid` to select on a dev split.
    #[arg(long, default_value = "1e-4", value_parser = parse_l2)]
    l2: L2Choice,
    #[arg(long, default_value = "nli")]
    name: String,
    #[command(flatten)]
    projection: ProjectionArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Config file of `key = value` lines (see the README).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Training embeddings [default: synthetic, see --n/--d].
    #[arg(long, requires = "test")]
    train: Option<PathBuf>,
    /// Test embeddings to transform.
    #[arg(long, requires = "train")]
    test: Option<PathBuf>,
    /// Rows of each synthetic split.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    /// Dimension of the synthetic data.
    #[arg(long, default_value_t = 768)]
    d: usize,
    /// Methods to time, comma-separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "pca,svd,kpca,grp,autoencoder")]
    methods: Vec<Method>,
    /// Target dimension k.
    #[arg(long, default_value_t = 300)]
    dim: usize,
    /// Timed repetitions per phase.
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Discarded repetitions before timing.
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Also time the parallel transform path.
    #[arg(long)]
    parallel: bool,
    /// Rows per chunk on the parallel path.
    #[arg(long, default_value_t = 256)]
    chunk_rows: usize,
    /// Bench CSV path [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Test sentences (an even number; consecutive rows form a pair).
    #[arg(long)]
    n: usize,
    /// Embedding dimension.
    #[arg(long)]
    d: usize,
    /// Number of latent directions.
    #[arg(long)]
    intrinsic: usize,
    /// Standard deviation of the isotropic noise.
    #[arg(long, default_value_t = 0.05)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training sentences, stored before the test rows.
    #[arg(long, default_value_t = 0)]
    train_n: usize,
    /// Output prefix: writes PREFIX.emb, PREFIX.pairs.tsv and, with
    /// --train-n, PREFIX.train.tsv.
    #[arg(long, default_value = "synth")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Sweep report CSV.
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
    /// Task to plot [default: first in the report].
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    title: Option<String>,
}

fn load_matrix(path: &Path) -> Result<EmbeddingMatrix, CliError> {
    Ok(load_embeddings(path, Format::from_path(path))?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_report(report: &EvalReport, output: &OutputArgs) -> Result<(), CliError> {
    match &output.out {
        Some(path) => report.write_csv(create(path)?)?,
        None => report.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &output.jsonl {
        report.write_jsonl(create(path)?)?;
    }
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let train = load_matrix(&a.train)?;
    let data = match &a.extra {
        Some(path) => train.vstack(&load_matrix(path)?)?,
        None => train,
    };
    let cfg = a.tuning.config(a.method, a.dim, data.dim());
    let start = Instant::now();
    let model = fit(&cfg, &data)?;
    let seconds = start.elapsed().as_secs_f64();
    save_model(&model, &a.out)?;
    println!(
        "{}: {} -> {} on {} rows in {seconds:.3} s, wrote {}",
        a.method.name(),
        model.input_dim(),
        model.output_dim(),
        data.rows(),
        a.out.display()
    );
    Ok(())
}

fn cmd_transform(a: TransformArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let input = load_matrix(&a.input)?;
    let out = transform(&model, &input)?;
    save_embeddings(&out, &a.out)?;
    println!(
        "{} rows: {} -> {}, wrote {}",
        out.rows(),
        input.dim(),
        out.dim(),
        a.out.display()
    );
    Ok(())
}

fn eval_report(
    task: &TaskInputs,
    p: &ProjectionArgs,
    l2: L2Choice,
) -> Result<EvalReport, CliError> {
    p.check()?;
    task.validate()?;
    let d = task.dim();
    let mut rows = Vec::new();
    if p.baseline {
        let s = task.run(None, l2)?;
        rows.push(EvalRow {
            task: task.name.clone(),
            method: METHOD_IDENTITY.into(),
            dim: d,
            setting: None,
            seed: 0,
            metric: s.metric.into(),
            value: s.value,
            fit_seconds: 0.0,
            transform_seconds: s.transform_seconds,
        });
    }
    let fitted: Option<(ProjectionModel, f64)> = match (&p.model, p.method, p.dim) {
        (Some(path), _, _) => Some((load_model(path)?, 0.0)),
        (None, Some(method), Some(dim)) => {
            let cfg = p.tuning.config(method, dim, d);
            let (train, test) = task.fit_rows()?;
            let start = Instant::now();
            let model = fit_for_setting(&cfg, &train, &test, p.setting)?;
            Some((model, start.elapsed().as_secs_f64()))
        }
        _ => None,
    };
    if let Some((model, fit_seconds)) = fitted {
        if model.input_dim() != d {
            return Err(ReducerError::DimensionMismatch {
                expected: model.input_dim(),
                found: d,
            }
            .into());
        }
        let s = task.run(Some(&model), l2)?;
        rows.push(EvalRow {
            task: task.name.clone(),
            method: model.method().name().into(),
            dim: model.output_dim(),
            setting: Some(p.setting),
            seed: p.tuning.seed,
            metric: s.metric.into(),
            value: s.value,
            fit_seconds,
            transform_seconds: s.transform_seconds,
        });
    }
    Ok(EvalReport::new(rows))
}

fn empty_pairs(kind: LabelKind) -> PairDataset {
    PairDataset::new(kind, Vec::new()).expect("empty dataset is valid")
}

fn cmd_eval_sts(a: EvalStsArgs) -> Result<(), CliError> {
    let task = TaskInputs {
        name: a.name,
        data: TaskData::Sts {
            a: load_matrix(&a.emb)?,
            b: a.emb_b.as_deref().map(load_matrix).transpose()?,
            train: match &a.train_pairs {
                Some(p) => load_pairs(p, LabelKind::Similarity)?,
                None => empty_pairs(LabelKind::Similarity),
            },
            test: load_pairs(&a.pairs, LabelKind::Similarity)?,
        },
    };
    write_report(
        &eval_report(&task, &a.projection, L2Choice::default())?,
        &a.output,
    )
}

fn cmd_eval_cls(a: EvalClsArgs) -> Result<(), CliError> {
    let task = TaskInputs {
        name: a.name,
        data: TaskData::Classification {
            emb: load_matrix(&a.emb)?,
            train: load_labels(&a.train_labels)?,
            test: load_labels(&a.test_labels)?,
        },
    };
    write_report(&eval_report(&task, &a.projection, a.l2)?, &a.output)
}

fn cmd_eval_nli(a: EvalNliArgs) -> Result<(), CliError> {
    let task = TaskInputs {
        name: a.name,
        data: TaskData::Entailment {
            a: load_matrix(&a.emb)?,
            b: a.emb_b.as_deref().map(load_matrix).transpose()?,
            train: load_pairs(&a.train_pairs, LabelKind::Entailment)?,
            test: load_pairs(&a.test_pairs, LabelKind::Entailment)?,
        },
    };
    write_report(&eval_report(&task, &a.projection, a.l2)?, &a.output)
}

fn load_task(c: &SweepConfig) -> Result<TaskInputs, CliError> {
    let a = load_matrix(&c.emb)?;
    let b = c.emb_b.as_deref().map(load_matrix).transpose()?;
    let data = match c.task {
        TaskKind::Sts => TaskData::Sts {
            a,
            b,
            train: match &c.train {
                Some(p) => load_pairs(p, LabelKind::Similarity)?,
                None => empty_pairs(LabelKind::Similarity),
            },
            test: load_pairs(&c.test, LabelKind::Similarity)?,
        },
        TaskKind::Cls => {
            if b.is_some() {
                return Err(CliError::usage("emb_b is only valid for pair tasks"));
            }
            let train = c.train.as_deref().expect("checked when parsing");
            TaskData::Classification {
                emb: a,
                train: load_labels(train)?,
                test: load_labels(&c.test)?,
            }
        }
        TaskKind::Nli => TaskData::Entailment {
            a,
            b,
            train: load_pairs(
                c.train.as_deref().expect("checked when parsing"),
                LabelKind::Entailment,
            )?,
            test: load_pairs(&c.test, LabelKind::Entailment)?,
        },
    };
    Ok(TaskInputs {
        name: c.name.clone(),
        data,
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let c = SweepConfig::load(&a.config)?;
    let task = load_task(&c)?;
    let d = task.dim();
    let spec = SweepSpec {
        methods: c.methods.clone(),
        dims: c.dims.clone().unwrap_or_else(|| default_dims(d)),
        settings: c.settings.clone(),
        seeds: c.seeds.clone(),
        base: c.tuning.config(Method::Pca, 1, d),
        l2: c.l2,
        parallel: c.parallel,
    };
    let report = sweep(&spec, &task)?;
    let failed = report.rows.iter().filter(|r| r.is_error()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} cells failed; see the error rows",
            report.rows.len()
        );
    }
    write_report(&report, &a.output)
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let (train, test) = match (&a.train, &a.test) {
        (Some(tr), Some(te)) => (load_matrix(tr)?, load_matrix(te)?),
        _ => {
            let intrinsic = 50.min(a.d);
            let (tr, te) = synth_split(a.n, a.n, a.d, intrinsic, 0.05, a.tuning.seed)?;
            (tr.embeddings, te.embeddings)
        }
    };
    let mut results = Vec::new();
    for &method in &a.methods {
        let cfg = a.tuning.config(method, a.dim, train.dim());
        eprintln!(
            "timing {} ({} x {} -> {})",
            method.name(),
            train.rows(),
            train.dim(),
            a.dim
        );
        let (f, t) = time_phase(&cfg, &train, &test, a.repeats, a.warmup)?;
        results.push(f);
        results.push(t);
        if a.parallel {
            let model = fit(&cfg, &train)?;
            results.push(time_parallel_transform(
                &cfg,
                &model,
                &test,
                a.chunk_rows,
                a.repeats,
                a.warmup,
            )?);
        }
    }
    match &a.out {
        Some(path) => write_bench_csv(&results, create(path)?)?,
        None => write_bench_csv(&results, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let (train, test) = synth_split(a.train_n, a.n, a.d, a.intrinsic, a.sigma, a.seed)?;
    let offset = train.embeddings.rows();
    let emb = train.embeddings.vstack(&test.embeddings)?;
    let shifted = test
        .pairs
        .records()
        .iter()
        .map(|r| PairRecord {
            a: r.a + offset,
            b: r.b + offset,
            gold: r.gold,
        })
        .collect();
    let emb_path = with_suffix(&a.out, ".emb");
    let pairs_path = with_suffix(&a.out, ".pairs.tsv");
    save_embeddings(&emb, &emb_path)?;
    save_pairs(
        &PairDataset::new(LabelKind::Similarity, shifted)?,
        &pairs_path,
    )?;
    println!(
        "wrote {} ({} x {})",
        emb_path.display(),
        emb.rows(),
        emb.dim()
    );
    println!(
        "wrote {} ({} pairs)",
        pairs_path.display(),
        test.pairs.len()
    );
    if a.train_n > 0 {
        let train_path = with_suffix(&a.out, ".train.tsv");
        save_pairs(&train.pairs, &train_path)?;
        println!(
            "wrote {} ({} pairs)",
            train_path.display(),
            train.pairs.len()
        );
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<(), CliError> {
    let file = File::open(&a.input)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", a.input.display())))?;
    let report = EvalReport::read_csv(file)?;
    let svg = plot::render_svg(&report, a.task.as_deref(), a.title.as_deref())?;
    let mut out = create(&a.out)?;
    out.write_all(svg.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Transform(a) => cmd_transform(a),
        Command::EvalSts(a) => cmd_eval_sts(a),
        Command::EvalCls(a) => cmd_eval_cls(a),
        Command::EvalNli(a) => cmd_eval_nli(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
