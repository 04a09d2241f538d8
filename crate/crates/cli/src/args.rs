use std::path::PathBuf;

use clap::Args;
use sentcomp::eval::L2Choice;
use sentcomp::reducers::{AeOptimizer, KernelKind, KernelSpec, Method, ReducerConfig};
use sentcomp::store::Setting;

use crate::error::CliError;

pub fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

pub fn parse_setting(s: &str) -> Result<Setting, String> {
    s.parse()
}

pub fn parse_kernel(s: &str) -> Result<KernelKind, String> {
    s.parse()
}

pub fn parse_optimizer(s: &str) -> Result<AeOptimizer, String> {
    s.parse()
}

pub fn parse_l2(s: &str) -> Result<L2Choice, String> {
    if s.trim() == "grid" {
        return Ok(L2Choice::Grid);
    }
    match s.trim().parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(L2Choice::Fixed(v)),
        _ => Err(format!(
            "expected a non-negative number or \"grid\", got {s:?}"
        )),
    }
}

/// Reducer settings other than method and target dimension.
#[derive(Debug, Clone, Args)]
pub struct TuningArgs {
    /// Seed for every random draw of the run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kernel for kpca: linear, rbf, poly or sigmoid [default: rbf].
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelKind>,
    /// Kernel scale [default: 1/d].
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Polynomial kernel degree.
    #[arg(long, default_value_t = 3)]
    pub degree: u32,
    /// Additive constant of the poly and sigmoid kernels.
    #[arg(long, default_value_t = 1.0)]
    pub coef0: f64,
    /// Diagonal jitter added to the centred kpca kernel.
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Scale PCA inputs to unit variance per column.
    #[arg(long)]
    pub standardize: bool,
    /// Autoencoder epochs.
    #[arg(long, default_value_t = 100)]
    pub ae_epochs: usize,
    /// Autoencoder learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub ae_lr: f64,
    /// Autoencoder mini-batch size.
    #[arg(long, default_value_t = 256)]
    pub ae_batch: usize,
    /// Autoencoder optimizer: adam or sgd.
    #[arg(long, default_value = "adam", value_parser = parse_optimizer)]
    pub ae_optimizer: AeOptimizer,
}

impl Default for TuningArgs {
    fn default() -> Self {
        Self {
            seed: 0,
            kernel: None,
            gamma: None,
            degree: 3,
            coef0: 1.0,
            jitter: 0.0,
            standardize: false,
            ae_epochs: 100,
            ae_lr: 1e-3,
            ae_batch: 256,
            ae_optimizer: AeOptimizer::Adam,
        }
    }
}

impl TuningArgs {
    pub fn config(&self, method: Method, dim: usize, input_dim: usize) -> ReducerConfig {
        let mut cfg = ReducerConfig::new(method, dim).with_seed(self.seed);
        let gamma = self.gamma.unwrap_or(1.0 / input_dim.max(1) as f64);
        cfg.kernel = match (self.kernel, self.gamma) {
            (None, None) => None,
            (Some(KernelKind::Linear), _) => Some(KernelSpec::linear()),
            (Some(KernelKind::Poly), _) => Some(KernelSpec::poly(gamma, self.degree, self.coef0)),
            (Some(KernelKind::Sigmoid), _) => Some(KernelSpec::sigmoid(gamma, self.coef0)),
            (Some(KernelKind::Rbf), _) | (None, Some(_)) => Some(KernelSpec::rbf(gamma)),
        };
        cfg.kpca_jitter = self.jitter;
        cfg.standardize = self.standardize;
        cfg.ae.epochs = self.ae_epochs;
        cfg.ae.learning_rate = self.ae_lr;
        cfg.ae.batch_size = self.ae_batch;
        cfg.ae.optimizer = self.ae_optimizer;
        cfg
    }
}

/// Where the projection of an `eval-*` run comes from.
#[derive(Debug, Clone, Args)]
pub struct ProjectionArgs {
    /// Also report the untransformed embeddings.
    #[arg(long)]
    pub baseline: bool,
    /// Use a fitted PRJ1 model.
    #[arg(long, conflicts_with_all = ["method", "dim"])]
    pub model: Option<PathBuf>,
    /// Fit this method on the task's sentences.
    #[arg(long, value_parser = parse_method, requires = "dim")]
    pub method: Option<Method>,
    /// Target dimension when fitting.
    #[arg(long, requires = "method")]
    pub dim: Option<usize>,
    /// inductive (train sentences) or transductive (train and test).
    #[arg(long, default_value = "inductive", value_parser = parse_setting)]
    pub setting: Setting,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

impl ProjectionArgs {
    pub fn check(&self) -> Result<(), CliError> {
        if !self.baseline && self.model.is_none() && self.method.is_none() {
            return Err(CliError::usage(
                "nothing to evaluate: pass --baseline, --model or --method/--dim",
            ));
        }
        Ok(())
    }
}
