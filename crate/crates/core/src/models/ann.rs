//! Embedding → masked mean pool → hidden layer → ReLU + dropout → output.

use super::layers::linear;
use super::{Batch, Builder, MaskableLayerHandle, Mode, ModelConfig, ParamGating};
use crate::autograd::{Tape, Var};
use crate::error::Result;

const EMBEDDING: usize = 0;
const HIDDEN_W: usize = 1;
const HIDDEN_B: usize = 2;
const OUTPUT_W: usize = 3;
const OUTPUT_B: usize = 4;

pub(super) fn init(
    cfg: &ModelConfig,
    b: &mut Builder<'_>,
) -> (Vec<MaskableLayerHandle>, Vec<ParamGating>) {
    let (e, h, c) = (cfg.embed_dim, cfg.hidden_dim, cfg.num_classes);
    b.embedding("embedding", cfg.vocab_size, e);
    b.weight("hidden.w", e, h);
    b.bias("hidden.b", e, h);
    b.weight("output.w", h, c);
    b.bias("output.b", h, c);
    let handles = vec![MaskableLayerHandle {
        layer_id: "hidden".into(),
        width: h,
    }];
    let gating = [HIDDEN_W, HIDDEN_B]
        .into_iter()
        .map(|param| ParamGating {
            param,
            out_handle: Some(0),
            in_handle: None,
        })
        .collect();
    (handles, gating)
}

pub(super) fn forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &[Var],
    batch: &Batch,
    gates: Option<&[Var]>,
    mode: Mode,
) -> Result<Var> {
    let emb = tape.embedding(p[EMBEDDING], &batch.ids)?;
    let pooled = tape.masked_mean_pool(emb, &batch.mask, batch.seq_len)?;
    let hidden = linear(tape, pooled, p[HIDDEN_W], p[HIDDEN_B])?;
    let hidden = tape.relu(hidden)?;
    let mut hidden = tape.dropout(hidden, cfg.dropout_p, mode.is_train(), mode.dropout_seed(1))?;
    if let Some(g) = gates {
        hidden = tape.mul_row(hidden, g[0])?;
    }
    linear(tape, hidden, p[OUTPUT_W], p[OUTPUT_B])
}
