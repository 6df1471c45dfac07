use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::OptimizerKind;
use crate::error::{Error, Result};
use crate::models::{Architecture, ModelConfig};
use crate::strategies::{StrategyParams, StrategySet};

/// Training, model and strategy hyperparameters. Every field has a default,
/// so a config file only lists what it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout_p: f64,
    pub capacity: usize,
    pub k: Option<usize>,
    pub eta_virtual: f64,
    pub n_candidates: Option<usize>,
    pub temperature: f64,
    pub alpha_lwf: f64,
    pub lwf_seen_classes_only: bool,
    pub s: f64,
    /// Examples per evaluation forward pass; does not affect results.
    pub eval_batch_size: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let sp = StrategyParams::default();
        let mc = ModelConfig::new(Architecture::Ann, 1);
        Hyperparameters {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 30,
            patience: 3,
            optimizer: OptimizerKind::Sgd,
            embed_dim: mc.embed_dim,
            hidden_dim: mc.hidden_dim,
            num_layers: mc.num_layers,
            num_heads: mc.num_heads,
            dropout_p: mc.dropout_p,
            capacity: sp.capacity,
            k: sp.k,
            eta_virtual: sp.eta_virtual,
            n_candidates: sp.n_candidates,
            temperature: sp.temperature,
            alpha_lwf: sp.alpha_lwf,
            lwf_seen_classes_only: sp.lwf_seen_classes_only,
            s: sp.s,
            eval_batch_size: 256,
        }
    }
}

impl Hyperparameters {
    pub fn strategy_params(&self) -> StrategyParams {
        StrategyParams {
            capacity: self.capacity,
            k: self.k,
            eta_virtual: self.eta_virtual,
            n_candidates: self.n_candidates,
            temperature: self.temperature,
            alpha_lwf: self.alpha_lwf,
            lwf_seen_classes_only: self.lwf_seen_classes_only,
            s: self.s,
        }
    }

    pub fn model_config(
        &self,
        architecture: Architecture,
        vocab_size: usize,
        num_classes: usize,
    ) -> ModelConfig {
        ModelConfig {
            architecture,
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            num_classes,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            dropout_p: self.dropout_p,
        }
    }
}

fn default_seed() -> u64 {
    42
}

/// One cell of the experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub architecture: Architecture,
    #[serde(default)]
    pub strategies: StrategySet,
    /// Train once on the union of all tasks instead of sequentially.
    #[serde(default)]
    pub joint: bool,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Further per-intent subsampling of the cached training data.
    #[serde(default)]
    pub subset_per_class: Option<usize>,
    /// Dataset cache written by `prepare`.
    pub data_dir: PathBuf,
    /// Parent directory of run records.
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(
        architecture: Architecture,
        strategies: StrategySet,
        data_dir: PathBuf,
        out_dir: PathBuf,
    ) -> Self {
        ExperimentConfig {
            architecture,
            strategies,
            joint: false,
            hyperparameters: Hyperparameters::default(),
            seed: default_seed(),
            subset_per_class: None,
            data_dir,
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyperparameters;
        if !(h.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if h.batch_size == 0 || h.max_epochs == 0 || h.eval_batch_size == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and eval_batch_size must be at least 1".into(),
            ));
        }
        if h.patience == 0 || h.patience > h.max_epochs {
            return Err(Error::Config(format!(
                "patience must be in 1..={} (max_epochs), got {}",
                h.max_epochs, h.patience
            )));
        }
        if self.joint && !self.strategies.is_empty() {
            return Err(Error::Config(
                "the joint baseline takes no strategies".into(),
            ));
        }
        if self.subset_per_class == Some(0) {
            return Err(Error::Config("subset_per_class must be at least 1".into()));
        }
        h.strategy_params().validate()?;
        h.model_config(self.architecture, 2, 1).validate()
    }

    /// `<architecture>__<naive|joint|strategy+set>__seed<seed>`.
    /// Reads a config file. Unknown keys and bad values are
    /// [`Error::Config`] errors.
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = read_config(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cell_id(&self) -> String {
        let kind = if self.joint {
            "joint".to_string()
        } else {
            self.strategies.to_string()
        };
        format!("{}__{}__seed{}", self.architecture, kind, self.seed)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.cell_id())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}
