use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{read_json, write_json, LogEvent, Progress, RunDir, RunRecord};
use super::{evaluate, EarlyStopping, ExperimentConfig};
use crate::autograd::{Optimizer, Tensor};
use crate::data::{load_prepared, subsample_per_class, Prepared, Utterance};
use crate::error::{Error, Result};
use crate::metrics::{Metrics, PerformanceMatrix};
use crate::models::{load_params, save_params, Model};
use crate::seeds;
use crate::strategies::{
    compose_step, hat_cumulate, load_state, save_state, Strategy, StrategyParams, StrategySet,
    StrategyState, TeacherSnapshot,
};

/// Loads the dataset cache named by `cfg` and applies its per-intent
/// training subset, if any.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut data = load_prepared(&cfg.data_dir)?;
    apply_subset(&mut data, cfg.subset_per_class);
    Ok(data)
}

pub(crate) fn apply_subset(data: &mut Prepared, subset: Option<usize>) {
    if let Some(n) = subset {
        for t in &mut data.tasks {
            t.train = subsample_per_class(&t.train, n);
        }
    }
}

/// Result of [`run_cell`].
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub record: RunRecord,
    /// Optimizer steps taken by this call; 0 when an existing record was reused.
    pub trained_steps: usize,
}

/// Runs one cell into `cfg.run_dir()`, reusing a complete record unless
/// `force` is set and resuming an interrupted one from its last finished task.
pub fn run_cell(cfg: &ExperimentConfig, data: &Prepared, force: bool) -> Result<CellOutcome> {
    cfg.validate()?;
    let dir = RunDir::new(cfg.run_dir());
    if !force {
        if let Ok(record) = dir.load() {
            if record.config_hash == cfg.hash() {
                log::info!("{}: complete record found, skipping", cfg.cell_id());
                return Ok(CellOutcome {
                    record,
                    trained_steps: 0,
                });
            }
        }
    }
    let mut session = Session::new(cfg, data, Some(dir), !force)?;
    let record = if cfg.joint {
        session.run_joint()?
    } else {
        session.run_sequential()?
    };
    Ok(CellOutcome {
        record,
        trained_steps: session.steps,
    })
}

/// Continual training over all tasks; with `dir`, progress is persisted as a
/// run record.
pub fn train_sequential(
    cfg: &ExperimentConfig,
    data: &Prepared,
    dir: Option<&RunDir>,
) -> Result<RunRecord> {
    cfg.validate()?;
    Session::new(cfg, data, dir.cloned(), false)?.run_sequential()
}

/// Upper-bound baseline: one model trained on the union of all tasks and
/// scored on the pooled test set, giving a 1×1 performance matrix.
pub fn train_joint(
    cfg: &ExperimentConfig,
    data: &Prepared,
    dir: Option<&RunDir>,
) -> Result<RunRecord> {
    cfg.validate()?;
    Session::new(cfg, data, dir.cloned(), false)?.run_joint()
}

/// Runs the first `tasks` tasks into `dir` and stops as if interrupted.
#[cfg(test)]
pub(crate) fn train_interrupted(
    cfg: &ExperimentConfig,
    data: &Prepared,
    dir: &RunDir,
    tasks: usize,
) -> Result<()> {
    let mut s = Session::new(cfg, data, Some(dir.clone()), false)?;
    s.stop_after = Some(tasks);
    match s.run_sequential() {
        Err(Error::IncompleteRun(_)) => Ok(()),
        Err(e) => Err(e),
        Ok(_) => Err(Error::Config(
            "run finished before the interruption point".into(),
        )),
    }
}

struct Session<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a Prepared,
    set: StrategySet,
    sp: StrategyParams,
    model: Model,
    state: StrategyState,
    matrix: PerformanceMatrix,
    events: Vec<LogEvent>,
    dir: Option<RunDir>,
    first_task: usize,
    /// Stop after this many tasks without finishing the record.
    stop_after: Option<usize>,
    steps: usize,
}

impl<'a> Session<'a> {
    fn new(
        cfg: &'a ExperimentConfig,
        data: &'a Prepared,
        dir: Option<RunDir>,
        allow_resume: bool,
    ) -> Result<Self> {
        if data.tasks.is_empty() {
            return Err(Error::Data("no tasks in dataset".into()));
        }
        let h = &cfg.hyperparameters;
        let model_cfg = h.model_config(cfg.architecture, data.vocab.len(), data.labels.len());
        let model = Model::build(model_cfg, seeds::derive(cfg.seed, &[1]))?;
        let set = if cfg.joint {
            StrategySet::naive()
        } else {
            cfg.strategies.clone()
        };
        let sp = h.strategy_params();
        let state = StrategyState::new(&set, &sp, &model, seeds::derive(cfg.seed, &[2]));
        let tasks = if cfg.joint { 1 } else { data.tasks.len() };
        let mut s = Session {
            cfg,
            data,
            set,
            sp,
            model,
            state,
            matrix: PerformanceMatrix::new(tasks),
            events: Vec::new(),
            dir,
            first_task: 1,
            stop_after: None,
            steps: 0,
        };
        if let Some(dir) = s.dir.clone() {
            if !(allow_resume && !cfg.joint && s.try_resume(&dir)?) {
                dir.start(cfg)?;
            }
        }
        Ok(s)
    }

    /// Picks up after the last finished task of an interrupted run.
    fn try_resume(&mut self, dir: &RunDir) -> Result<bool> {
        let ckpt = dir.checkpoint_dir();
        let Ok(progress) = read_json::<Progress>(&ckpt.join("progress.json")) else {
            return Ok(false);
        };
        if progress.config_hash != self.cfg.hash()
            || progress.completed_tasks >= self.matrix.tasks()
        {
            return Ok(false);
        }
        let Ok(matrix) = PerformanceMatrix::read_csv(&dir.acc_path(), &dir.f1_path()) else {
            return Ok(false);
        };
        if matrix.tasks() != self.matrix.tasks()
            || matrix.completed_rows() != progress.completed_tasks
        {
            return Ok(false);
        }
        let params = load_params(&ckpt.join("model.json"), self.model.params())?;
        self.model.set_params(params)?;
        self.state = load_state(&ckpt.join("strategy.json"), self.model.params())?;
        self.matrix = matrix;
        self.events = dir.read_events().unwrap_or_default();
        self.first_task = progress.completed_tasks + 1;
        log::info!(
            "{}: resuming at task {}",
            self.cfg.cell_id(),
            self.first_task
        );
        Ok(true)
    }

    fn gates(&mut self, task: usize) -> Option<Vec<Tensor>> {
        if self.set.contains(Strategy::Hat) {
            self.state.hat.as_mut().map(|h| h.gates(task))
        } else {
            None
        }
    }

    fn log(&mut self, event: LogEvent) -> Result<()> {
        if let Some(dir) = &self.dir {
            dir.append_log(&event)?;
        }
        self.events.push(event);
        Ok(())
    }

    /// Epoch loop with early stopping on `val`; ends with the best epoch's
    /// parameters (and task gates) restored.
    fn train_task(
        &mut self,
        task: usize,
        train: &[Utterance],
        val: &[Utterance],
        seen: &[usize],
    ) -> Result<()> {
        let h = &self.cfg.hyperparameters;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Data(format!(
                "task {task} has an empty train or validation split"
            )));
        }
        let started = Instant::now();
        let mut optimizer = Optimizer::new(h.optimizer, h.learning_rate);
        let mut stopper = EarlyStopping::new(h.patience);
        let mut best = (self.model.params().clone(), self.hat_embeddings(task));
        let mut epochs = 0;
        for epoch in 1..=h.max_epochs {
            let epoch_start = Instant::now();
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds::derive(
                self.cfg.seed,
                &[3, task as u64, epoch as u64],
            )));
            let mut loss_sum = 0.0;
            let mut batches = 0;
            for (b, idx) in order.chunks(h.batch_size).enumerate() {
                let batch: Vec<&Utterance> = idx.iter().map(|&i| &train[i]).collect();
                let step_seed =
                    seeds::derive(self.cfg.seed, &[4, task as u64, epoch as u64, b as u64]);
                let report = compose_step(
                    &mut self.model,
                    &mut optimizer,
                    &mut self.state,
                    &self.set,
                    &self.sp,
                    &batch,
                    task,
                    seen,
                    step_seed,
                )?;
                loss_sum += report.loss;
                batches += 1;
                self.steps += 1;
            }
            let gates = self.gates(task);
            let val_loss = evaluate(&self.model, val, gates.as_deref(), h.eval_batch_size)?.loss;
            let verdict = stopper.observe(val_loss);
            if verdict.improved {
                best = (self.model.params().clone(), self.hat_embeddings(task));
            }
            epochs = epoch;
            self.log(LogEvent::Epoch {
                task,
                epoch,
                train_loss: loss_sum / batches as f64,
                val_loss,
                improved: verdict.improved,
                seconds: epoch_start.elapsed().as_secs_f64(),
            })?;
            if verdict.stop {
                break;
            }
        }
        self.model.set_params(best.0)?;
        if let (Some(hat), Some(e)) = (self.state.hat.as_mut(), best.1) {
            hat.set_embeddings(task, e);
        }
        let gates = self.gates(task);
        let val_loss = evaluate(&self.model, val, gates.as_deref(), h.eval_batch_size)?.loss;
        self.log(LogEvent::TaskEnd {
            task,
            epochs,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best_loss(),
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        })
    }

    fn hat_embeddings(&mut self, task: usize) -> Option<Vec<Vec<f64>>> {
        let _ = self.gates(task);
        self.state
            .hat
            .as_ref()
            .and_then(|h| h.embeddings(task))
            .map(<[Vec<f64>]>::to_vec)
    }

    fn run_sequential(&mut self) -> Result<RunRecord> {
        let data = self.data;
        let eval_bs = self.cfg.hyperparameters.eval_batch_size;
        for t in self.first_task..=data.tasks.len() {
            let task = &data.tasks[t - 1];
            let seen: Vec<usize> = data.tasks[..t - 1]
                .iter()
                .flat_map(|d| d.label_set.iter().copied())
                .collect();
            self.train_task(t, &task.train, &task.val, &seen)?;
            for j in 1..=t {
                let gates = self.gates(j);
                let ev = evaluate(
                    &self.model,
                    &data.tasks[j - 1].test,
                    gates.as_deref(),
                    eval_bs,
                )?;
                self.matrix.record(t, j, ev.accuracy, ev.macro_f1)?;
            }
            if self.set.contains(Strategy::Lwf) {
                self.state.teacher = Some(TeacherSnapshot {
                    params: self.model.params().clone(),
                    snapshot_task: t,
                });
            }
            if let (true, Some(hat)) = (self.set.contains(Strategy::Hat), self.state.hat.as_mut()) {
                hat_cumulate(hat, t);
            }
            self.checkpoint(t)?;
            if self.stop_after == Some(t) {
                return Err(Error::IncompleteRun(
                    self.dir
                        .as_ref()
                        .map(|d| d.root().to_path_buf())
                        .unwrap_or_default(),
                ));
            }
        }
        self.finish()
    }

    fn run_joint(&mut self) -> Result<RunRecord> {
        let pool = |f: fn(&crate::data::TaskDataset) -> &Vec<Utterance>| -> Vec<Utterance> {
            self.data
                .tasks
                .iter()
                .flat_map(|t| f(t).iter().cloned())
                .collect()
        };
        let (train, val, test) = (pool(|t| &t.train), pool(|t| &t.val), pool(|t| &t.test));
        self.train_task(1, &train, &val, &[])?;
        let ev = evaluate(
            &self.model,
            &test,
            None,
            self.cfg.hyperparameters.eval_batch_size,
        )?;
        self.matrix.record(1, 1, ev.accuracy, ev.macro_f1)?;
        self.checkpoint(1)?;
        self.finish()
    }

    fn checkpoint(&self, completed: usize) -> Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let ckpt = dir.checkpoint_dir();
        dir.write_matrix(&self.matrix)?;
        save_params(&ckpt.join("model.json"), self.model.params())?;
        save_state(&ckpt.join("strategy.json"), &self.state)?;
        write_json(
            &ckpt.join("progress.json"),
            &Progress {
                config_hash: self.cfg.hash(),
                completed_tasks: completed,
            },
        )
    }

    fn finish(&self) -> Result<RunRecord> {
        let metrics = Metrics::from_matrix(&self.matrix)?;
        if let Some(dir) = &self.dir {
            dir.finish(&metrics)?;
        }
        Ok(RunRecord {
            config: self.cfg.clone(),
            config_hash: self.cfg.hash(),
            matrix: self.matrix.clone(),
            metrics,
            events: self.events.clone(),
        })
    }
}
