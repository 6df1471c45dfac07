//! Corpus ingestion and task construction: loading the CLINC150 JSON,
//! text normalization, a corpus-built vocabulary, label encoding, the
//! label-disjoint task partition and an on-disk cache of the result.

mod cache;
mod clinc;
mod labels;
pub mod synthetic;
mod tasks;
mod text;

use serde::{Deserialize, Serialize};

use crate::models::Batch;

pub use cache::{load_prepared, save_prepared, Manifest, TaskCounts};
pub use clinc::{load_clinc150, parse_clinc150, RawExample, RawSplits, EXPECTED_COUNTS};
pub use labels::LabelEncoder;
pub use tasks::{
    construct_tasks, partition_labels, prepare, subsample_per_class, PrepareOptions, Prepared,
};
pub use text::{preprocess, tokenize, Vocabulary, PAD_ID, UNK_ID};

/// Fixed sequence length of every tokenized utterance.
pub const MAX_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub text: String,
    pub label_id: usize,
    pub token_ids: Vec<usize>,
    pub mask: Vec<u8>,
}

impl Utterance {
    /// Tokenizes an already preprocessed `text`. An empty text becomes a
    /// single unknown token so that every utterance has at least one real
    /// position.
    pub fn new(text: &str, label_id: usize, vocab: &Vocabulary, len: usize) -> Self {
        let (mut token_ids, mut mask) = tokenize(text, vocab, len);
        if mask.first() == Some(&0) {
            token_ids[0] = UNK_ID;
            mask[0] = 1;
        }
        Utterance {
            text: text.to_string(),
            label_id,
            token_ids,
            mask,
        }
    }

    pub fn true_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskDataset {
    /// 1-based position in the task sequence.
    pub task_index: usize,
    /// Sorted label ids belonging to this task.
    pub label_set: Vec<usize>,
    pub train: Vec<Utterance>,
    pub val: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Stacks utterances into a model batch trimmed to the longest sequence.
pub fn make_batch(items: &[&Utterance]) -> crate::Result<Batch> {
    let seqs: Vec<(&[usize], &[u8])> = items
        .iter()
        .map(|u| (u.token_ids.as_slice(), u.mask.as_slice()))
        .collect();
    let labels: Vec<usize> = items.iter().map(|u| u.label_id).collect();
    Batch::from_sequences(&seqs, &labels)
}
