//! Embedding + sinusoidal positions → pre-norm encoder blocks → final
//! LayerNorm → masked mean pool → output.
//!
//! Block: `x += Drop(SelfAttn(LN₁(x)))`, then
//! `x += Drop(W₂ · gate ⊙ ReLU(W₁ · LN₂(x)))`.

use super::layers::{linear, self_attention, sinusoidal_positions, AttentionWeights};
use super::{Batch, Builder, MaskableLayerHandle, Mode, ModelConfig, ParamGating};
use crate::autograd::{Tape, Tensor, Var};
use crate::error::Result;

const PER_BLOCK: usize = 16;
const FFN_EXPANSION: usize = 4;

pub(super) fn init(
    cfg: &ModelConfig,
    b: &mut Builder<'_>,
) -> (Vec<MaskableLayerHandle>, Vec<ParamGating>) {
    let (e, c) = (cfg.embed_dim, cfg.num_classes);
    let f = FFN_EXPANSION * e;
    let mut handles = Vec::new();
    let mut gating = Vec::new();
    b.embedding("embedding", cfg.vocab_size, e);
    for k in 0..cfg.num_layers {
        let pre = format!("block{k}");
        b.constant(&format!("{pre}.ln1.g"), e, 1.0);
        b.constant(&format!("{pre}.ln1.b"), e, 0.0);
        for proj in ["q", "k", "v", "o"] {
            b.weight(&format!("{pre}.attn.w{proj}"), e, e);
            b.bias(&format!("{pre}.attn.b{proj}"), e, e);
        }
        b.constant(&format!("{pre}.ln2.g"), e, 1.0);
        b.constant(&format!("{pre}.ln2.b"), e, 0.0);
        let w1 = b.weight(&format!("{pre}.ffn.w1"), e, f);
        let b1 = b.bias(&format!("{pre}.ffn.b1"), e, f);
        let w2 = b.weight(&format!("{pre}.ffn.w2"), f, e);
        b.bias(&format!("{pre}.ffn.b2"), f, e);
        for param in [w1, b1] {
            gating.push(ParamGating {
                param,
                out_handle: Some(k),
                in_handle: None,
            });
        }
        gating.push(ParamGating {
            param: w2,
            out_handle: None,
            in_handle: Some(k),
        });
        handles.push(MaskableLayerHandle {
            layer_id: format!("{pre}.ffn"),
            width: f,
        });
    }
    let pooled = cfg.num_layers;
    let g = b.constant("final_ln.g", e, 1.0);
    let bb = b.constant("final_ln.b", e, 0.0);
    for param in [g, bb] {
        gating.push(ParamGating {
            param,
            out_handle: Some(pooled),
            in_handle: None,
        });
    }
    b.weight("output.w", e, c);
    b.bias("output.b", e, c);
    handles.push(MaskableLayerHandle {
        layer_id: "pooled".into(),
        width: e,
    });
    (handles, gating)
}

fn attention_weights(p: &[Var], base: usize) -> AttentionWeights {
    AttentionWeights {
        wq: p[base + 2],
        bq: p[base + 3],
        wk: p[base + 4],
        bk: p[base + 5],
        wv: p[base + 6],
        bv: p[base + 7],
        wo: p[base + 8],
        bo: p[base + 9],
    }
}

pub(super) fn forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &[Var],
    batch: &Batch,
    gates: Option<&[Var]>,
    mode: Mode,
) -> Result<Var> {
    let (bsz, len, e) = (batch.batch, batch.seq_len, cfg.embed_dim);
    let train = mode.is_train();
    let emb = tape.embedding(p[0], &batch.ids)?;
    let table = sinusoidal_positions(len, e);
    let mut pos = Vec::with_capacity(bsz * len * e);
    for _ in 0..bsz {
        pos.extend_from_slice(table.data());
    }
    let pos = tape.constant(Tensor::matrix(bsz * len, e, pos)?)?;
    let mut x = tape.add(emb, pos)?;

    for k in 0..cfg.num_layers {
        let base = 1 + k * PER_BLOCK;
        let site = 10 * (k as u64 + 1);
        let a = tape.layer_norm(x, p[base], p[base + 1])?;
        let att = self_attention(
            tape,
            a,
            &batch.mask,
            bsz,
            len,
            cfg.num_heads,
            &attention_weights(p, base),
        )?;
        let att = tape.dropout(att, cfg.dropout_p, train, mode.dropout_seed(site))?;
        x = tape.add(x, att)?;

        let f = tape.layer_norm(x, p[base + 10], p[base + 11])?;
        let mut u = linear(tape, f, p[base + 12], p[base + 13])?;
        u = tape.relu(u)?;
        if let Some(g) = gates {
            u = tape.mul_row(u, g[k])?;
        }
        let u = tape.dropout(u, cfg.dropout_p, train, mode.dropout_seed(site + 1))?;
        let y = linear(tape, u, p[base + 14], p[base + 15])?;
        let y = tape.dropout(y, cfg.dropout_p, train, mode.dropout_seed(site + 2))?;
        x = tape.add(x, y)?;
    }
    let tail = 1 + cfg.num_layers * PER_BLOCK;
    let x = tape.layer_norm(x, p[tail], p[tail + 1])?;
    let mut pooled = tape.masked_mean_pool(x, &batch.mask, len)?;
    if let Some(g) = gates {
        pooled = tape.mul_row(pooled, g[cfg.num_layers])?;
    }
    linear(tape, pooled, p[tail + 2], p[tail + 3])
}
