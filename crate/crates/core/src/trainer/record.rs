//! Run record directory:
//!
//! ```text
//! config.json      the ExperimentConfig plus its hash
//! log.jsonl        one event per epoch and per finished task
//! r_acc.csv        accuracy matrix, rewritten after every task
//! r_f1.csv         macro-F1 matrix
//! checkpoints/     model.json, strategy.json, progress.json (latest task)
//! metrics.json     summary metrics; written last, marks the run complete
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{Metrics, PerformanceMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Epoch {
        task: usize,
        epoch: usize,
        train_loss: f64,
        val_loss: f64,
        improved: bool,
        seconds: f64,
    },
    TaskEnd {
        task: usize,
        epochs: usize,
        best_epoch: usize,
        best_val_loss: f64,
        /// Validation loss re-measured after restoring the best weights.
        val_loss: f64,
        seconds: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub config_hash: String,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub config_hash: String,
    pub completed_tasks: usize,
}

/// Outcome of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub matrix: PerformanceMatrix,
    pub metrics: Metrics,
    pub events: Vec<LogEvent>,
}

impl RunRecord {
    /// Seconds spent per task, from the task-end events.
    pub fn task_seconds(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter_map(|e| match e {
                LogEvent::TaskEnd { seconds, .. } => Some(*seconds),
                _ => None,
            })
            .collect()
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Handle on a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.json")
    }

    pub fn acc_path(&self) -> PathBuf {
        self.root.join("r_acc.csv")
    }

    pub fn f1_path(&self) -> PathBuf {
        self.root.join("r_f1.csv")
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join("log.jsonl")
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn is_complete(&self) -> bool {
        self.load().is_ok()
    }

    /// Clears earlier contents and writes `config.json`.
    pub(crate) fn start(&self, config: &ExperimentConfig) -> Result<()> {
        if self.root.exists() {
            std::fs::remove_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        }
        let ckpt = self.checkpoint_dir();
        std::fs::create_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        write_json(
            &self.config_path(),
            &ConfigFile {
                config_hash: config.hash(),
                config: config.clone(),
            },
        )
    }

    pub(crate) fn append_log(&self, event: &LogEvent) -> Result<()> {
        let path = self.log_path();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(event).map_err(|e| Error::json(&path, e))?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    pub(crate) fn write_matrix(&self, m: &PerformanceMatrix) -> Result<()> {
        m.write_csv(&self.acc_path(), &self.f1_path())
    }

    pub(crate) fn finish(&self, metrics: &Metrics) -> Result<()> {
        write_json(&self.metrics_path(), metrics)
    }

    pub fn read_events(&self) -> Result<Vec<LogEvent>> {
        let path = self.log_path();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::json(&path, e)))
            .collect()
    }

    /// Loads a complete record; a missing or inconsistent piece is an
    /// [`Error::IncompleteRun`].
    pub fn load(&self) -> Result<RunRecord> {
        let incomplete = || Error::IncompleteRun(self.root.clone());
        if !self.metrics_path().is_file() {
            return Err(incomplete());
        }
        let cfg: ConfigFile = read_json(&self.config_path()).map_err(|_| incomplete())?;
        let metrics: Metrics = read_json(&self.metrics_path()).map_err(|_| incomplete())?;
        let matrix = PerformanceMatrix::read_csv(&self.acc_path(), &self.f1_path())
            .map_err(|_| incomplete())?;
        if !matrix.is_complete() {
            return Err(incomplete());
        }
        let events = self.read_events().unwrap_or_default();
        Ok(RunRecord {
            config: cfg.config,
            config_hash: cfg.config_hash,
            matrix,
            metrics,
            events,
        })
    }
}
