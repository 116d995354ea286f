//! Flat TOML experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::enco::EncoConfig;
use crate::error::{Error, Result};
use crate::meta::{MetaConfig, PretrainConfig};
use crate::toy::{Mode, ModelKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelChoice {
    #[serde(rename = "mm")]
    Marginal,
    #[serde(rename = "cm")]
    Conditional,
    #[serde(rename = "meta")]
    Meta,
    #[serde(rename = "enco")]
    Enco,
    #[serde(rename = "bias-only")]
    BiasOnly,
}

impl ModelChoice {
    pub fn label(self) -> &'static str {
        match self {
            ModelChoice::Marginal => "mm",
            ModelChoice::Conditional => "cm",
            ModelChoice::Meta => "meta",
            ModelChoice::Enco => "enco",
            ModelChoice::BiasOnly => "bias-only",
        }
    }

    /// The illustrator model, if this choice names one.
    pub fn toy_kind(self) -> Option<ModelKind> {
        match self {
            ModelChoice::Marginal => Some(ModelKind::Marginal),
            ModelChoice::Conditional => Some(ModelKind::Conditional),
            _ => None,
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mm" => Ok(ModelChoice::Marginal),
            "cm" => Ok(ModelChoice::Conditional),
            "meta" => Ok(ModelChoice::Meta),
            "enco" => Ok(ModelChoice::Enco),
            "bias-only" | "bias" => Ok(ModelChoice::BiasOnly),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

/// `n` log-spaced points from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i == n - 1 => hi,
            _ => 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64),
        })
        .collect()
}

/// 13 log-spaced values in `[0.1, 10]`.
pub fn default_epsilon_grid() -> Vec<f64> {
    log_grid(0.1, 10.0, 13)
}

/// `0, 0.1, ..., 1`.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

/// Every knob of every experiment. Grids left unset are filled per
/// experiment by [`ExperimentConfig::epsilon_grid`] and
/// [`ExperimentConfig::lambda_grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub tau: f64,
    pub n_runs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    pub batches_per_intervention: usize,
    pub mode: Mode,
    pub model: ModelChoice,
    pub base_seed: u64,
    pub warmup_batches: usize,

    /// Interventions per chain in the shift sweep.
    pub chain_length: usize,
    /// Scatter points kept per case and lambda.
    pub scatter_cap: usize,

    pub meta_episodes: usize,
    pub meta_adapt_steps: usize,
    pub meta_batch_size: usize,
    pub meta_adapt_lr: f64,
    pub meta_lr: f64,
    pub meta_reset: bool,
    pub meta_pretrain_lr: f64,
    pub meta_pretrain_max_steps: usize,
    pub meta_pretrain_tol: f64,

    pub enco_stages: usize,
    pub enco_fit_batches: usize,
    pub enco_graph_batches: usize,
    pub enco_batch_size: usize,
    pub enco_fit_lr: f64,
    pub enco_graph_lr: f64,
    pub enco_lambda_sparse: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let meta = MetaConfig::default();
        let enco = EncoConfig::default();
        Self {
            k: train.k,
            epochs: train.epochs,
            batches_per_epoch: train.batches_per_epoch,
            batch_size: train.batch_size,
            lr: train.lr,
            tau: train.tau,
            n_runs: 100,
            epsilon: None,
            lambda: None,
            batches_per_intervention: train.batches_per_intervention,
            mode: Mode::Interventional,
            model: ModelChoice::Marginal,
            base_seed: 0,
            warmup_batches: train.warmup_batches,
            chain_length: 100,
            scatter_cap: crate::probes::SCATTER_CAP,
            meta_episodes: meta.episodes,
            meta_adapt_steps: meta.adapt_steps,
            meta_batch_size: meta.batch_size,
            meta_adapt_lr: meta.adapt_lr,
            meta_lr: meta.meta_lr,
            meta_reset: meta.reset,
            meta_pretrain_lr: meta.pretrain.lr,
            meta_pretrain_max_steps: meta.pretrain.max_steps,
            meta_pretrain_tol: meta.pretrain.tol,
            enco_stages: enco.stages,
            enco_fit_batches: enco.fit_batches,
            enco_graph_batches: enco.graph_batches,
            enco_batch_size: enco.batch_size,
            enco_fit_lr: enco.fit_lr,
            enco_graph_lr: enco.graph_lr,
            enco_lambda_sparse: enco.lambda_sparse,
        }
    }
}

/// Which sweep a grid is requested for; decides the default grids.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    BiasH,
    BiasS,
    Train,
    Meta,
    Enco,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }

    /// The epsilon grid for `experiment`: the configured one, or the
    /// log-spaced default for entropy sweeps and observational training,
    /// `[1]` otherwise.
    pub fn epsilon_grid(&self, experiment: Experiment) -> Vec<f64> {
        if let Some(grid) = &self.epsilon {
            return grid.clone();
        }
        match experiment {
            Experiment::BiasH => default_epsilon_grid(),
            Experiment::Train if self.mode == Mode::Observational => default_epsilon_grid(),
            _ => vec![1.0],
        }
    }

    /// The lambda grid for `experiment`: the configured one, `[0]` where
    /// lambda has no effect, the `0..=1` default otherwise.
    pub fn lambda_grid(&self, experiment: Experiment) -> Vec<f64> {
        if let Some(grid) = &self.lambda {
            return grid.clone();
        }
        match experiment {
            Experiment::BiasH => vec![0.0],
            Experiment::Train if self.mode == Mode::Observational => vec![0.0],
            _ => default_lambda_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("epochs", self.epochs),
            ("batches_per_epoch", self.batches_per_epoch),
            ("batch_size", self.batch_size),
            ("n_runs", self.n_runs),
            ("batches_per_intervention", self.batches_per_intervention),
            ("chain_length", self.chain_length),
            ("meta_episodes", self.meta_episodes),
            ("meta_adapt_steps", self.meta_adapt_steps),
            ("meta_batch_size", self.meta_batch_size),
            ("enco_stages", self.enco_stages),
            ("enco_fit_batches", self.enco_fit_batches),
            ("enco_graph_batches", self.enco_graph_batches),
            ("enco_batch_size", self.enco_batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        let rates = [
            ("lr", self.lr),
            ("tau", self.tau),
            ("meta_adapt_lr", self.meta_adapt_lr),
            ("meta_lr", self.meta_lr),
            ("meta_pretrain_lr", self.meta_pretrain_lr),
            ("meta_pretrain_tol", self.meta_pretrain_tol),
            ("enco_fit_lr", self.enco_fit_lr),
            ("enco_graph_lr", self.enco_graph_lr),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.enco_lambda_sparse.is_finite() && self.enco_lambda_sparse >= 0.0) {
            return Err(Error::Config("enco_lambda_sparse must be non-negative".into()));
        }
        if let Some(grid) = &self.epsilon {
            if grid.is_empty() {
                return Err(Error::Config("epsilon grid is empty".into()));
            }
            if let Some(e) = grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(Error::Config(format!("epsilon must be positive, got {e}")));
            }
        }
        if let Some(grid) = &self.lambda {
            if grid.is_empty() {
                return Err(Error::Config("lambda grid is empty".into()));
            }
            if let Some(l) = grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
                return Err(Error::Config(format!("lambda must lie in [0, 1], got {l}")));
            }
        }
        Ok(())
    }

    pub fn train_config(&self, epsilon: f64, lambda: f64) -> TrainConfig {
        TrainConfig {
            k: self.k,
            epsilon,
            lambda,
            mode: self.mode,
            epochs: self.epochs,
            batches_per_epoch: self.batches_per_epoch,
            batch_size: self.batch_size,
            lr: self.lr,
            tau: self.tau,
            batches_per_intervention: self.batches_per_intervention,
            warmup_batches: self.warmup_batches,
        }
    }

    pub fn meta_config(&self, epsilon: f64, lambda: f64) -> MetaConfig {
        MetaConfig {
            k: self.k,
            epsilon,
            lambda,
            episodes: self.meta_episodes,
            adapt_steps: self.meta_adapt_steps,
            batch_size: self.meta_batch_size,
            adapt_lr: self.meta_adapt_lr,
            meta_lr: self.meta_lr,
            reset: self.meta_reset,
            pretrain: PretrainConfig {
                lr: self.meta_pretrain_lr,
                max_steps: self.meta_pretrain_max_steps,
                tol: self.meta_pretrain_tol,
            },
        }
    }

    pub fn enco_config(&self, epsilon: f64, lambda: f64) -> EncoConfig {
        EncoConfig {
            k: self.k,
            epsilon,
            lambda,
            stages: self.enco_stages,
            fit_batches: self.enco_fit_batches,
            graph_batches: self.enco_graph_batches,
            batch_size: self.enco_batch_size,
            fit_lr: self.enco_fit_lr,
            graph_lr: self.enco_graph_lr,
            lambda_sparse: self.enco_lambda_sparse,
        }
    }
}
