use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, Tensor};
use crate::models::{MaskableLayerHandle, ParamGating};
use crate::seeds;

/// Per-task gate embeddings and the cumulative masks of finished tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatState {
    pub s: f64,
    seed: u64,
    widths: Vec<usize>,
    /// Task index → one embedding vector per maskable layer.
    embeddings: BTreeMap<usize, Vec<Vec<f64>>>,
    /// One vector per maskable layer, entries in [0, 1].
    cumulative: Vec<Vec<f64>>,
}

impl HatState {
    pub fn new(handles: &[MaskableLayerHandle], s: f64, seed: u64) -> Self {
        let widths: Vec<usize> = handles.iter().map(|h| h.width).collect();
        HatState {
            s,
            seed,
            cumulative: widths.iter().map(|&w| vec![0.0; w]).collect(),
            widths,
            embeddings: BTreeMap::new(),
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Embeddings for `task`, drawn U(−1, 1) on first use.
    pub fn ensure_task(&mut self, task: usize) -> &mut Vec<Vec<f64>> {
        let (seed, widths) = (self.seed, &self.widths);
        self.embeddings.entry(task).or_insert_with(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, &[task as u64]));
            widths
                .iter()
                .map(|&w| (0..w).map(|_| rng.random_range(-1.0..=1.0)).collect())
                .collect()
        })
    }

    pub fn embeddings(&self, task: usize) -> Option<&[Vec<f64>]> {
        self.embeddings.get(&task).map(Vec::as_slice)
    }

    /// Replaces one task's embeddings (after an optimizer step).
    pub fn set_embeddings(&mut self, task: usize, e: Vec<Vec<f64>>) {
        self.embeddings.insert(task, e);
    }

    pub fn cumulative(&self) -> &[Vec<f64>] {
        &self.cumulative
    }

    /// Gates of every layer for `task`, initializing its embeddings if needed.
    pub fn gates(&mut self, task: usize) -> Vec<Tensor> {
        self.ensure_task(task);
        (0..self.widths.len())
            .map(|l| Tensor::vector(hat_gates(self, l, task).expect("embedding exists")))
            .collect()
    }
}

/// `σ(s · e)` for one layer and task, or `None` before the task's embedding
/// exists.
pub fn hat_gates(state: &HatState, layer: usize, task: usize) -> Option<Vec<f64>> {
    let e = state.embeddings.get(&task)?.get(layer)?;
    Some(e.iter().map(|&x| sigmoid(state.s * x)).collect())
}

/// Folds `task`'s gates into the cumulative masks by elementwise max.
pub fn hat_cumulate(state: &mut HatState, task: usize) {
    state.ensure_task(task);
    for l in 0..state.widths.len() {
        let a = hat_gates(state, l, task).expect("embedding exists");
        for (m, g) in state.cumulative[l].iter_mut().zip(a) {
            *m = m.max(g);
        }
    }
}

/// Attenuates gradients of units claimed by earlier tasks.
///
/// For a weight `[in × out]`, entry `(j, i)` is multiplied by
/// `1 − min(m_out[i], m_in[j])` when both sides are gated, by `1 − m_out[i]`
/// or `1 − m_in[j]` when only one is, and left alone otherwise. A 1-D
/// parameter uses `1 − m_out[i]`. `grads[p]` holds the flat gradient of
/// parameter `p`, with `shapes[p]` its shape.
pub fn hat_scale_gradients(
    grads: &mut [Vec<f64>],
    shapes: &[&[usize]],
    gating: &[ParamGating],
    cumulative: &[Vec<f64>],
) {
    for g in gating {
        let grad = &mut grads[g.param];
        let shape = shapes[g.param];
        let m_out = g.out_handle.map(|h| cumulative[h].as_slice());
        let m_in = g.in_handle.map(|h| cumulative[h].as_slice());
        match *shape {
            [n] => {
                if let Some(m) = m_out {
                    for i in 0..n {
                        grad[i] *= 1.0 - m[i];
                    }
                }
            }
            [rows, cols] => {
                for j in 0..rows {
                    for i in 0..cols {
                        let f = match (m_out, m_in) {
                            (Some(mo), Some(mi)) => 1.0 - mo[i].min(mi[j]),
                            (Some(mo), None) => 1.0 - mo[i],
                            (None, Some(mi)) => 1.0 - mi[j],
                            (None, None) => 1.0,
                        };
                        grad[j * cols + i] *= f;
                    }
                }
            }
            _ => {}
        }
    }
}
