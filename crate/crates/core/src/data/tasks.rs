use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    preprocess, LabelEncoder, RawExample, RawSplits, TaskDataset, Utterance, Vocabulary, MAX_LEN,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PrepareOptions {
    pub num_tasks: usize,
    pub seed: u64,
    /// Keep only the first N training utterances of each intent.
    pub subset_per_class: Option<usize>,
    pub min_freq: usize,
    pub seq_len: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            num_tasks: 10,
            seed: 42,
            subset_per_class: None,
            min_freq: 1,
            seq_len: MAX_LEN,
        }
    }
}

/// Everything the trainer needs: vocabulary, label encoding and the tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub labels: LabelEncoder,
    pub tasks: Vec<TaskDataset>,
    pub seed: u64,
    pub subset_per_class: Option<usize>,
    pub seq_len: usize,
}

/// Shuffles label ids `0..num_labels` with `seed` and cuts them into
/// `num_tasks` equal groups, each returned sorted.
pub fn partition_labels(num_labels: usize, num_tasks: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if num_tasks == 0 || num_labels == 0 || !num_labels.is_multiple_of(num_tasks) {
        return Err(Error::Config(format!(
            "{num_labels} labels cannot be split into {num_tasks} equal tasks"
        )));
    }
    let mut ids: Vec<usize> = (0..num_labels).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(ids
        .chunks(num_labels / num_tasks)
        .map(|c| {
            let mut c = c.to_vec();
            c.sort_unstable();
            c
        })
        .collect())
}

/// Keeps the first `n` utterances of each label, preserving order.
pub fn subsample_per_class(items: &[Utterance], n: usize) -> Vec<Utterance> {
    let mut seen: HashMap<usize, usize> = HashMap::new();
    items
        .iter()
        .filter(|u| {
            let c = seen.entry(u.label_id).or_default();
            *c += 1;
            *c <= n
        })
        .cloned()
        .collect()
}

/// Splits encoded utterances into label-disjoint tasks.
pub fn construct_tasks(
    train: &[Utterance],
    val: &[Utterance],
    test: &[Utterance],
    num_labels: usize,
    num_tasks: usize,
    seed: u64,
) -> Result<Vec<TaskDataset>> {
    let groups = partition_labels(num_labels, num_tasks, seed)?;
    let mut owner = vec![0usize; num_labels];
    for (t, g) in groups.iter().enumerate() {
        for &l in g {
            owner[l] = t;
        }
    }
    let mut tasks: Vec<TaskDataset> = groups
        .into_iter()
        .enumerate()
        .map(|(t, label_set)| TaskDataset {
            task_index: t + 1,
            label_set,
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        })
        .collect();
    for (split, items) in [(0, train), (1, val), (2, test)] {
        for u in items {
            let t = *owner.get(u.label_id).ok_or_else(|| {
                Error::Data(format!("label id {} outside 0..{num_labels}", u.label_id))
            })?;
            let task = &mut tasks[t];
            match split {
                0 => task.train.push(u.clone()),
                1 => task.val.push(u.clone()),
                _ => task.test.push(u.clone()),
            }
        }
    }
    Ok(tasks)
}

fn clean(xs: &[RawExample]) -> Vec<(String, &str)> {
    xs.iter()
        .map(|e| (preprocess(&e.text), e.intent.as_str()))
        .collect()
}

/// Full pipeline from raw splits: preprocess, build the vocabulary on the
/// complete training split, encode labels, tokenize, subsample training data
/// and partition into tasks.
pub fn prepare(raw: &RawSplits, opts: &PrepareOptions) -> Result<Prepared> {
    if raw.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let (train, val, test) = (clean(&raw.train), clean(&raw.val), clean(&raw.test));
    let texts: Vec<&str> = train.iter().map(|(t, _)| t.as_str()).collect();
    let vocab = Vocabulary::build(&texts, opts.min_freq)?;
    let labels = LabelEncoder::fit(raw.intents());
    let encode = |xs: &[(String, &str)]| -> Result<Vec<Utterance>> {
        xs.iter()
            .map(|(t, intent)| {
                Ok(Utterance::new(
                    t,
                    labels.encode(intent)?,
                    &vocab,
                    opts.seq_len,
                ))
            })
            .collect()
    };
    let mut train_u = encode(&train)?;
    if let Some(n) = opts.subset_per_class {
        train_u = subsample_per_class(&train_u, n);
    }
    let tasks = construct_tasks(
        &train_u,
        &encode(&val)?,
        &encode(&test)?,
        labels.len(),
        opts.num_tasks,
        opts.seed,
    )?;
    Ok(Prepared {
        vocab,
        labels,
        tasks,
        seed: opts.seed,
        subset_per_class: opts.subset_per_class,
        seq_len: opts.seq_len,
    })
}
