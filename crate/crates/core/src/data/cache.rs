//! Dataset cache layout:
//!
//! ```text
//! <dir>/manifest.json        seed, label sets, per-task counts, vocab hash
//! <dir>/vocab.json           id-ordered token list
//! <dir>/labels.json          id-ordered intent names
//! <dir>/task_01/train.jsonl  one {"text","label_id","token_ids","mask"} per line
//! <dir>/task_01/val.jsonl
//! <dir>/task_01/test.jsonl
//! ```

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LabelEncoder, Prepared, TaskDataset, Utterance, Vocabulary};
use crate::error::{Error, Result};

const CACHE_FORMAT: &str = "forgetbench.tasks.v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub num_tasks: usize,
    pub num_labels: usize,
    pub seq_len: usize,
    pub subset_per_class: Option<usize>,
    pub label_sets: Vec<Vec<usize>>,
    pub counts: Vec<TaskCounts>,
    pub vocab_size: usize,
    pub vocab_hash: String,
}

impl Manifest {
    pub fn of(p: &Prepared) -> Self {
        Manifest {
            format: CACHE_FORMAT.into(),
            seed: p.seed,
            num_tasks: p.tasks.len(),
            num_labels: p.labels.len(),
            seq_len: p.seq_len,
            subset_per_class: p.subset_per_class,
            label_sets: p.tasks.iter().map(|t| t.label_set.clone()).collect(),
            counts: p
                .tasks
                .iter()
                .map(|t| TaskCounts {
                    train: t.train.len(),
                    val: t.val.len(),
                    test: t.test.len(),
                })
                .collect(),
            vocab_size: p.vocab.len(),
            vocab_hash: p.vocab.hash(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join("manifest.json"))
    }
}

fn task_dir(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("task_{index:02}"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_jsonl(path: &Path, items: &[Utterance]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for u in items {
        serde_json::to_writer(&mut w, u).map_err(|e| Error::json(path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_jsonl(path: &Path) -> Result<Vec<Utterance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| Error::json(path, e))?);
        }
    }
    Ok(out)
}

/// Writes the cache; output is a pure function of `prepared`.
pub fn save_prepared(dir: &Path, prepared: &Prepared) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("vocab.json"), &prepared.vocab)?;
    write_json(&dir.join("labels.json"), &prepared.labels)?;
    for task in &prepared.tasks {
        let td = task_dir(dir, task.task_index);
        std::fs::create_dir_all(&td).map_err(|e| Error::io(&td, e))?;
        write_jsonl(&td.join("train.jsonl"), &task.train)?;
        write_jsonl(&td.join("val.jsonl"), &task.val)?;
        write_jsonl(&td.join("test.jsonl"), &task.test)?;
    }
    let manifest = Manifest::of(prepared);
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Loads a cache written by [`save_prepared`], checking it against its
/// manifest.
pub fn load_prepared(dir: &Path) -> Result<Prepared> {
    let manifest = Manifest::read(dir)?;
    if manifest.format != CACHE_FORMAT {
        return Err(Error::Data(format!(
            "{}: unknown cache format {}",
            dir.display(),
            manifest.format
        )));
    }
    let vocab: Vocabulary = read_json(&dir.join("vocab.json"))?;
    if vocab.hash() != manifest.vocab_hash {
        return Err(Error::Data(format!(
            "{}: vocabulary does not match manifest",
            dir.display()
        )));
    }
    let labels: LabelEncoder = read_json(&dir.join("labels.json"))?;
    let mut tasks = Vec::with_capacity(manifest.num_tasks);
    for (i, label_set) in manifest.label_sets.iter().enumerate() {
        let td = task_dir(dir, i + 1);
        let task = TaskDataset {
            task_index: i + 1,
            label_set: label_set.clone(),
            train: read_jsonl(&td.join("train.jsonl"))?,
            val: read_jsonl(&td.join("val.jsonl"))?,
            test: read_jsonl(&td.join("test.jsonl"))?,
        };
        let c = manifest.counts.get(i).copied();
        let got = TaskCounts {
            train: task.train.len(),
            val: task.val.len(),
            test: task.test.len(),
        };
        if c != Some(got) {
            return Err(Error::Data(format!(
                "{}: split sizes differ from manifest",
                td.display()
            )));
        }
        tasks.push(task);
    }
    Ok(Prepared {
        vocab,
        labels,
        tasks,
        seed: manifest.seed,
        subset_per_class: manifest.subset_per_class,
        seq_len: manifest.seq_len,
    })
}
