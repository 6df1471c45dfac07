//! Performance matrices and the continual-learning summary metrics.
//!
//! `R[i][j]` is the score on task `j` measured right after training on task
//! `i` (both 1-based, `j <= i`). With `T` tasks:
//!
//! - AA / AF1: mean of the final row.
//! - BWT: `(1/(T-1)) Σ_{j<T} (R[T][j] - R[j][j])`.
//! - averaged BWT: mean of `BWT_i` for `i = 2..T`, where `BWT_i` applies
//!   the BWT formula to the first `i` rows. `BWT_1` has no terms and is left
//!   out, so the divisor is `T-1`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Unweighted mean of per-class F1 over the classes of `class_set` that occur
/// in `labels` or `preds`. A class with zero precision and recall scores 0.
pub fn macro_f1(preds: &[usize], labels: &[usize], class_set: &[usize]) -> Result<f64> {
    check_lengths(preds, labels)?;
    let allowed: BTreeSet<usize> = class_set.iter().copied().collect();
    let present: BTreeSet<usize> = preds
        .iter()
        .chain(labels)
        .copied()
        .filter(|c| allowed.contains(c))
        .collect();
    if present.is_empty() {
        return Err(Error::Metric(
            "no class of the class set occurs in the data".into(),
        ));
    }
    let total: f64 = present
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for (&p, &l) in preds.iter().zip(labels) {
                match (p == c, l == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
            if tp == 0 {
                0.0
            } else {
                // 2PR/(P+R) written in counts.
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            }
        })
        .sum();
    Ok(total / present.len() as f64)
}

fn check_lengths(preds: &[usize], labels: &[usize]) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Metric("empty prediction set".into()));
    }
    if preds.len() != labels.len() {
        return Err(Error::shape(
            "metric",
            format!("{} predictions for {} labels", preds.len(), labels.len()),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    F1,
}

/// Lower-triangular accuracy and macro-F1 matrices filled row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceMatrix {
    tasks: usize,
    acc: Vec<Vec<Option<f64>>>,
    f1: Vec<Vec<Option<f64>>>,
}

impl PerformanceMatrix {
    pub fn new(tasks: usize) -> Self {
        PerformanceMatrix {
            tasks,
            acc: (1..=tasks).map(|i| vec![None; i]).collect(),
            f1: (1..=tasks).map(|i| vec![None; i]).collect(),
        }
    }

    /// Builds a complete matrix from explicit lower-triangular rows.
    pub fn from_rows(acc: &[Vec<f64>], f1: &[Vec<f64>]) -> Result<Self> {
        let mut m = Self::new(acc.len());
        if f1.len() != acc.len() {
            return Err(Error::shape(
                "performance matrix",
                "accuracy and F1 row counts differ",
            ));
        }
        for (i, (ra, rf)) in acc.iter().zip(f1).enumerate() {
            if ra.len() != i + 1 || rf.len() != i + 1 {
                return Err(Error::shape(
                    "performance matrix",
                    format!("row {} must have {} entries", i + 1, i + 1),
                ));
            }
            for j in 0..=i {
                m.record(i + 1, j + 1, ra[j], rf[j])?;
            }
        }
        Ok(m)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    /// Writes `R[i][j]` once. Rows must be filled in order, and only on or
    /// below the diagonal.
    pub fn record(&mut self, i: usize, j: usize, acc: f64, f1: f64) -> Result<()> {
        if i == 0 || i > self.tasks || j == 0 || j > i {
            return Err(Error::Metric(format!(
                "entry ({i}, {j}) outside the lower triangle of {}",
                self.tasks
            )));
        }
        if i > 1 && !self.row_complete(i - 1) {
            return Err(Error::Metric(format!(
                "row {} written before row {} is complete",
                i,
                i - 1
            )));
        }
        for v in [acc, f1] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Metric(format!("score {v} outside [0, 1]")));
            }
        }
        if self.acc[i - 1][j - 1].is_some() {
            return Err(Error::Metric(format!("entry ({i}, {j}) already written")));
        }
        self.acc[i - 1][j - 1] = Some(acc);
        self.f1[i - 1][j - 1] = Some(f1);
        Ok(())
    }

    pub fn get(&self, metric: Metric, i: usize, j: usize) -> Option<f64> {
        self.table(metric)
            .get(i.checked_sub(1)?)?
            .get(j.checked_sub(1)?)
            .copied()
            .flatten()
    }

    pub fn row_complete(&self, i: usize) -> bool {
        i >= 1 && i <= self.tasks && self.acc[i - 1].iter().all(Option::is_some)
    }

    /// Number of leading complete rows.
    pub fn completed_rows(&self) -> usize {
        (1..=self.tasks)
            .take_while(|&i| self.row_complete(i))
            .count()
    }

    pub fn is_complete(&self) -> bool {
        self.tasks > 0 && self.row_complete(self.tasks)
    }

    fn table(&self, metric: Metric) -> &[Vec<Option<f64>>] {
        match metric {
            Metric::Accuracy => &self.acc,
            Metric::F1 => &self.f1,
        }
    }

    fn row(&self, metric: Metric, i: usize) -> Result<Vec<f64>> {
        if !self.row_complete(i) {
            return Err(Error::Metric(format!("row {i} is not complete")));
        }
        Ok(self.table(metric)[i - 1]
            .iter()
            .map(|v| v.unwrap())
            .collect())
    }

    /// Mean of row `i`: the average score over tasks seen so far.
    pub fn average_at(&self, metric: Metric, i: usize) -> Result<f64> {
        let row = self.row(metric, i)?;
        Ok(row.iter().sum::<f64>() / row.len() as f64)
    }

    /// BWT computed over the first `i` rows (`i >= 2`).
    pub fn bwt_at(&self, metric: Metric, i: usize) -> Result<f64> {
        if i < 2 {
            return Err(Error::Metric(
                "backward transfer needs at least two tasks".into(),
            ));
        }
        let last = self.row(metric, i)?;
        let mut total = 0.0;
        for (j, v) in last.iter().enumerate().take(i - 1) {
            total += v - self.row(metric, j + 1)?[j];
        }
        Ok(total / (i - 1) as f64)
    }

    /// Per-task curves: average score and averaged BWT after each task.
    /// Averaged BWT is absent for the first task.
    pub fn curves(&self) -> Curves {
        let n = self.completed_rows();
        let avg = |m| (1..=n).map(|i| self.average_at(m, i).unwrap()).collect();
        let avg_bwt = |m| {
            (1..=n)
                .map(|i| (i >= 2).then(|| mean((2..=i).map(|k| self.bwt_at(m, k).unwrap()))))
                .collect()
        };
        Curves {
            aa: avg(Metric::Accuracy),
            af1: avg(Metric::F1),
            avg_bwt_acc: avg_bwt(Metric::Accuracy),
            avg_bwt_f1: avg_bwt(Metric::F1),
        }
    }

    /// CSV with a header row; upper-triangle cells are empty.
    pub fn to_csv(&self, metric: Metric) -> String {
        let mut out = String::from("after_task");
        for j in 1..=self.tasks {
            let _ = write!(out, ",task_{j}");
        }
        out.push('\n');
        for (i, row) in self.table(metric).iter().enumerate() {
            let _ = write!(out, "{}", i + 1);
            for j in 0..self.tasks {
                out.push(',');
                if let Some(Some(v)) = row.get(j) {
                    let _ = write!(out, "{v}");
                }
            }
            out.push('\n');
        }
        out
    }

    /// Reads back a pair of CSVs written by [`to_csv`](Self::to_csv).
    pub fn from_csv(acc: &str, f1: &str) -> Result<Self> {
        let parse = |s: &str| -> Result<Vec<Vec<Option<f64>>>> {
            s.lines()
                .skip(1)
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split(',')
                        .skip(1)
                        .map(|c| {
                            let c = c.trim();
                            if c.is_empty() {
                                Ok(None)
                            } else {
                                c.parse::<f64>()
                                    .map(Some)
                                    .map_err(|_| Error::Data(format!("bad matrix cell {c:?}")))
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let (a, f) = (parse(acc)?, parse(f1)?);
        let mut m = Self::new(a.len());
        if f.len() != a.len() {
            return Err(Error::Data(
                "accuracy and F1 matrices differ in size".into(),
            ));
        }
        for i in 0..a.len() {
            for j in 0..=i {
                match (
                    a[i].get(j).copied().flatten(),
                    f[i].get(j).copied().flatten(),
                ) {
                    (Some(x), Some(y)) => m.record(i + 1, j + 1, x, y)?,
                    (None, None) => {}
                    _ => {
                        return Err(Error::Data(format!(
                            "cell ({}, {}) filled in only one matrix",
                            i + 1,
                            j + 1
                        )))
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn write_csv(&self, acc_path: &Path, f1_path: &Path) -> Result<()> {
        std::fs::write(acc_path, self.to_csv(Metric::Accuracy))
            .map_err(|e| Error::io(acc_path, e))?;
        std::fs::write(f1_path, self.to_csv(Metric::F1)).map_err(|e| Error::io(f1_path, e))
    }

    pub fn read_csv(acc_path: &Path, f1_path: &Path) -> Result<Self> {
        let a = std::fs::read_to_string(acc_path).map_err(|e| Error::io(acc_path, e))?;
        let f = std::fs::read_to_string(f1_path).map_err(|e| Error::io(f1_path, e))?;
        Self::from_csv(&a, &f)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn compute_aa(r: &PerformanceMatrix) -> Result<f64> {
    r.average_at(Metric::Accuracy, r.tasks())
}

pub fn compute_af1(r: &PerformanceMatrix) -> Result<f64> {
    r.average_at(Metric::F1, r.tasks())
}

pub fn compute_bwt(r: &PerformanceMatrix, metric: Metric) -> Result<f64> {
    r.bwt_at(metric, r.tasks())
}

pub fn compute_avg_bwt(r: &PerformanceMatrix, metric: Metric) -> Result<f64> {
    let t = r.tasks();
    if t < 2 {
        return Err(Error::Metric(
            "averaged backward transfer needs at least two tasks".into(),
        ));
    }
    let terms = (2..=t)
        .map(|i| r.bwt_at(metric, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(terms.into_iter()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub aa: Vec<f64>,
    pub af1: Vec<f64>,
    pub avg_bwt_acc: Vec<Option<f64>>,
    pub avg_bwt_f1: Vec<Option<f64>>,
}

/// The flat summary written to `metrics.json`. BWT fields are null when
/// undefined (a single task, or the joint baseline).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub aa: f64,
    pub af1: f64,
    pub bwt_acc: Option<f64>,
    pub bwt_f1: Option<f64>,
    pub avg_bwt_acc: Option<f64>,
    pub avg_bwt_f1: Option<f64>,
}

impl Metrics {
    pub fn from_matrix(r: &PerformanceMatrix) -> Result<Self> {
        let two = r.tasks() >= 2;
        let opt = |f: &dyn Fn() -> Result<f64>| if two { f().map(Some) } else { Ok(None) };
        Ok(Metrics {
            aa: compute_aa(r)?,
            af1: compute_af1(r)?,
            bwt_acc: opt(&|| compute_bwt(r, Metric::Accuracy))?,
            bwt_f1: opt(&|| compute_bwt(r, Metric::F1))?,
            avg_bwt_acc: opt(&|| compute_avg_bwt(r, Metric::Accuracy))?,
            avg_bwt_f1: opt(&|| compute_avg_bwt(r, Metric::F1))?,
        })
    }
}
