use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::run::apply_subset;
use super::{run_cell, CellOutcome, ExperimentConfig, Hyperparameters};
use crate::data::load_prepared;
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::strategies::StrategySet;

/// One entry of a grid's `strategies` list: `"joint"`, `"naive"`, a
/// `+`-joined set such as `"mir+hat"`, or a list of names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSpec {
    Name(String),
    List(StrategySet),
}

impl CellSpec {
    /// `(joint, strategies)`.
    fn resolve(&self) -> Result<(bool, StrategySet)> {
        match self {
            CellSpec::Name(n) if n.eq_ignore_ascii_case("joint") => {
                Ok((true, StrategySet::naive()))
            }
            CellSpec::Name(n) => Ok((false, n.parse()?)),
            CellSpec::List(s) => Ok((false, s.clone())),
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![42]
}

/// Cross product of architectures, strategy cells and seeds sharing one
/// dataset cache and hyperparameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub architectures: Vec<Architecture>,
    pub strategies: Vec<CellSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub subset_per_class: Option<usize>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl GridConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let grid: GridConfig = super::config::read_config(path)?;
        grid.expand()?;
        Ok(grid)
    }

    pub fn expand(&self) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for &arch in &self.architectures {
            for spec in &self.strategies {
                let (joint, strategies) = spec.resolve()?;
                for &seed in &self.seeds {
                    let cfg = ExperimentConfig {
                        architecture: arch,
                        strategies: strategies.clone(),
                        joint,
                        hyperparameters: self.hyperparameters.clone(),
                        seed,
                        subset_per_class: self.subset_per_class,
                        data_dir: self.data_dir.clone(),
                        out_dir: self.out_dir.clone(),
                    };
                    cfg.validate()?;
                    out.push(cfg);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("grid expands to no cells".into()));
        }
        Ok(out)
    }
}

/// Runs every cell of `grid` on up to `jobs` threads. Cells share the
/// dataset read-only; results come back in grid order.
pub fn run_grid(grid: &GridConfig, force: bool, jobs: usize) -> Result<Vec<CellOutcome>> {
    let cells = grid.expand()?;
    let mut data = load_prepared(&grid.data_dir)?;
    apply_subset(&mut data, grid.subset_per_class);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<CellOutcome>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = cells.get(i) else { break };
                log::info!("running {} ({}/{})", cfg.cell_id(), i + 1, cells.len());
                let r = run_cell(cfg, &data, force);
                results.lock().expect("no poisoned lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}
