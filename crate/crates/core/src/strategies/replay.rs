use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{cross_entropy_rows, Tape, Tensor};
use crate::data::Utterance;
use crate::error::Result;
use crate::models::{Batch, Mode, Model, Params};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayItem {
    pub token_ids: Vec<usize>,
    pub mask: Vec<u8>,
    pub label_id: usize,
    pub task_index: usize,
    /// Position in the stream of stored items; smaller means stored earlier.
    pub inserted: u64,
}

/// Fixed-capacity reservoir over every training example streamed into it.
///
/// The slot decision for the n-th example draws from a generator seeded by
/// `(seed, n)`, so the buffer has no hidden generator state and its
/// serialized form is a complete checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    seed: u64,
    seen: u64,
    stored: u64,
    items: Vec<ReplayItem>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity,
            seed,
            seen: 0,
            stored: 0,
            items: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ReplayItem] {
        &self.items
    }

    /// Total number of examples offered so far.
    pub fn seen_count(&self) -> u64 {
        self.seen
    }

    /// Offers one example. Once full, the n-th example replaces a uniformly
    /// chosen slot with probability capacity / n.
    pub fn offer(&mut self, token_ids: &[usize], mask: &[u8], label_id: usize, task_index: usize) {
        self.seen += 1;
        let slot = if self.items.len() < self.capacity {
            None
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(self.seed, &[self.seen]));
            let j = rng.random_range(0..self.seen);
            if j >= self.capacity as u64 {
                return;
            }
            Some(j as usize)
        };
        let item = ReplayItem {
            token_ids: token_ids.to_vec(),
            mask: mask.to_vec(),
            label_id,
            task_index,
            inserted: self.stored,
        };
        self.stored += 1;
        match slot {
            None => self.items.push(item),
            Some(j) => self.items[j] = item,
        }
    }
}

/// Streams the current task's batch into the buffer.
pub fn buffer_update(buffer: &mut ReplayBuffer, batch: &[&Utterance], task_index: usize) {
    for u in batch {
        buffer.offer(&u.token_ids, &u.mask, u.label_id, task_index);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MirParams {
    pub eta_virtual: f64,
    pub k: usize,
    pub n_candidates: Option<usize>,
}

pub(crate) fn items_batch(items: &[&ReplayItem]) -> Result<Batch> {
    let seqs: Vec<(&[usize], &[u8])> = items
        .iter()
        .map(|i| (i.token_ids.as_slice(), i.mask.as_slice()))
        .collect();
    let labels: Vec<usize> = items.iter().map(|i| i.label_id).collect();
    Batch::from_sequences(&seqs, &labels)
}

/// Picks the `k` buffer items whose loss rises most under a virtual SGD step
/// on `batch`. Only items stored from tasks before `current_task` are
/// candidates.
///
/// The virtual step `θ' = θ − η ∇L(batch; θ)` is taken on a copy; the model
/// and any optimizer are untouched. Each candidate scores
/// `r = L(x; θ') − L(x; θ)`. The result is ordered by descending `r`, ties
/// going to the item stored earlier.
pub fn mir_select(
    model: &Model,
    gates: Option<&[Tensor]>,
    batch: &Batch,
    buffer: &ReplayBuffer,
    params: &MirParams,
    current_task: usize,
    seed: u64,
) -> Result<Vec<ReplayItem>> {
    let pool: Vec<&ReplayItem> = buffer
        .items
        .iter()
        .filter(|i| i.task_index < current_task)
        .collect();
    if pool.is_empty() || params.k == 0 {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape, true)?;
    let gate_vars = gates
        .map(|gs| {
            gs.iter()
                .map(|g| tape.constant(g.clone()))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let logits = model.forward(
        &mut tape,
        &bound,
        batch,
        gate_vars.as_deref(),
        Mode::Train {
            dropout_seed: seeds::derive(seed, &[0]),
        },
    )?;
    let loss = tape.cross_entropy(logits, &batch.labels)?;
    tape.backward(loss)?;
    let mut virtual_params: Params = model.params().clone();
    for (t, v) in virtual_params.tensors_mut().iter_mut().zip(&bound) {
        if let Some(g) = tape.grad(*v) {
            for (w, d) in t.data_mut().iter_mut().zip(g) {
                *w -= params.eta_virtual * d;
            }
        }
    }
    drop(tape);

    let mut candidates: Vec<&ReplayItem> = match params.n_candidates {
        Some(n) if n < pool.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[1]));
            rand::seq::index::sample(&mut rng, pool.len(), n)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
        _ => pool,
    };
    candidates.sort_by_key(|c| c.inserted);
    let cand_batch = items_batch(&candidates)?;
    let before = cross_entropy_rows(&model.logits(&cand_batch, gates)?, &cand_batch.labels)?;
    let after = cross_entropy_rows(
        &model.logits_with(&virtual_params, &cand_batch, gates)?,
        &cand_batch.labels,
    )?;

    let mut scored: Vec<(f64, &ReplayItem)> = after
        .iter()
        .zip(&before)
        .map(|(a, b)| a - b)
        .zip(candidates)
        .collect();
    // Candidates are already in insertion order and the sort is stable.
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(scored
        .into_iter()
        .take(params.k)
        .map(|(_, item)| item.clone())
        .collect())
}
