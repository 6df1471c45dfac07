//! Experiment engine: the continual training loop, the joint baseline,
//! evaluation, early stopping, run records and the experiment grid.

mod config;
mod early_stop;
mod eval;
mod grid;
mod record;
mod run;

pub use config::{ExperimentConfig, Hyperparameters};
pub use early_stop::{early_stop_controller, EarlyStopping, Verdict};
pub use eval::{evaluate, Evaluation};
pub use grid::{run_grid, GridConfig};
pub use record::{ConfigFile, LogEvent, RunDir, RunRecord};
pub use run::{load_data, run_cell, train_joint, train_sequential, CellOutcome};
