//! Sweep configuration files.
//!
//! One `key = value` per line; `#` starts a comment; list values are
//! comma-separated. Relative paths are resolved against the file's
//! directory.
//!
//! ```text
//! task     = sts            # sts, cls or nli
//! name     = stsb           # task column of the report [default: task]
//! emb      = sentences.emb  # side a (or the only matrix)
//! emb_b    = other.emb      # optional side b for pair tasks
//! train    = train.tsv      # pairs (sts, nli) or labels (cls)
//! test     = test.tsv
//! methods  = pca, svd, grp
//! dims     = 64, 128, 384   # or "default"
//! settings = inductive, transductive
//! seeds    = 0, 1
//! ```
//!
//! Optional keys: `kernel`, `gamma`, `degree`, `coef0`, `jitter`,
//! `standardize`, `ae_epochs`, `ae_lr`, `ae_batch`, `ae_optimizer`, `l2`
//! (a value or `grid`) and `parallel`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sentcomp::eval::L2Choice;
use sentcomp::reducers::Method;
use sentcomp::store::Setting;

use crate::args::{parse_l2, TuningArgs};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Sts,
    Cls,
    Nli,
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sts" => Ok(TaskKind::Sts),
            "cls" => Ok(TaskKind::Cls),
            "nli" => Ok(TaskKind::Nli),
            other => Err(format!("unknown task {other:?} (expected sts, cls or nli)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub task: TaskKind,
    pub name: String,
    pub emb: PathBuf,
    pub emb_b: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: PathBuf,
    pub methods: Vec<Method>,
    /// `None` selects the default grid for the input dimension.
    pub dims: Option<Vec<usize>>,
    pub settings: Vec<Setting>,
    pub seeds: Vec<u64>,
    pub tuning: TuningArgs,
    pub l2: L2Choice,
    pub parallel: bool,
}

const KEYS: [&str; 22] = [
    "task",
    "name",
    "emb",
    "emb_b",
    "train",
    "test",
    "methods",
    "dims",
    "settings",
    "seeds",
    "kernel",
    "gamma",
    "degree",
    "coef0",
    "jitter",
    "standardize",
    "ae_epochs",
    "ae_lr",
    "ae_batch",
    "ae_optimizer",
    "l2",
    "parallel",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::usage(format!("config key {key}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse_value(key, v))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(CliError::usage(format!(
            "config key {key}: expected true or false, got {other:?}"
        ))),
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config line {}: expected `key = value`",
                    no + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(CliError::usage(format!(
                    "config line {}: unknown key {key:?}",
                    no + 1
                )));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::usage(format!(
                    "config line {}: duplicate key {key:?}",
                    no + 1
                )));
            }
        }
        let get = |k: &str| entries.get(k).map(String::as_str);
        let required = |k: &str| {
            get(k).ok_or_else(|| CliError::usage(format!("config is missing required key {k:?}")))
        };
        let resolve = |v: &str| base.join(v);

        let task: TaskKind = parse_value("task", required("task")?)?;
        let mut tuning = TuningArgs::default();
        if let Some(v) = get("kernel") {
            tuning.kernel = Some(parse_value("kernel", v)?);
        }
        if let Some(v) = get("gamma") {
            tuning.gamma = Some(parse_value("gamma", v)?);
        }
        if let Some(v) = get("degree") {
            tuning.degree = parse_value("degree", v)?;
        }
        if let Some(v) = get("coef0") {
            tuning.coef0 = parse_value("coef0", v)?;
        }
        if let Some(v) = get("jitter") {
            tuning.jitter = parse_value("jitter", v)?;
        }
        if let Some(v) = get("standardize") {
            tuning.standardize = parse_bool("standardize", v)?;
        }
        if let Some(v) = get("ae_epochs") {
            tuning.ae_epochs = parse_value("ae_epochs", v)?;
        }
        if let Some(v) = get("ae_lr") {
            tuning.ae_lr = parse_value("ae_lr", v)?;
        }
        if let Some(v) = get("ae_batch") {
            tuning.ae_batch = parse_value("ae_batch", v)?;
        }
        if let Some(v) = get("ae_optimizer") {
            tuning.ae_optimizer = parse_value("ae_optimizer", v)?;
        }
        let dims = match get("dims") {
            None | Some("default") => None,
            Some(v) => Some(parse_list("dims", v)?),
        };
        let config = SweepConfig {
            task,
            name: get("name").unwrap_or(required("task")?).to_string(),
            emb: resolve(required("emb")?),
            emb_b: get("emb_b").map(resolve),
            train: get("train").map(resolve),
            test: resolve(required("test")?),
            methods: parse_list("methods", required("methods")?)?,
            dims,
            settings: match get("settings") {
                Some(v) => parse_list("settings", v)?,
                None => vec![Setting::Inductive, Setting::Transductive],
            },
            seeds: match get("seeds") {
                Some(v) => parse_list("seeds", v)?,
                None => vec![0],
            },
            tuning,
            l2: match get("l2") {
                Some(v) => {
                    parse_l2(v).map_err(|e| CliError::usage(format!("config key l2: {e}")))?
                }
                None => L2Choice::default(),
            },
            parallel: get("parallel")
                .map(|v| parse_bool("parallel", v))
                .transpose()?
                .unwrap_or(false),
        };
        if config.task != TaskKind::Sts && config.train.is_none() {
            return Err(CliError::usage("config is missing required key \"train\""));
        }
        Ok(config)
    }
}
