//! Embedding → single GRU layer → output. The classification feature is the
//! hidden state at the last unmasked position: masked steps carry the state
//! through unchanged.

use super::layers::{gru_update, linear, GruWeights};
use super::{Batch, Builder, MaskableLayerHandle, ModelConfig, ParamGating};
use crate::autograd::{Tape, Tensor, Var};
use crate::error::Result;

const EMBEDDING: usize = 0;
const OUTPUT_W: usize = 10;
const OUTPUT_B: usize = 11;

pub(super) fn init(
    cfg: &ModelConfig,
    b: &mut Builder<'_>,
) -> (Vec<MaskableLayerHandle>, Vec<ParamGating>) {
    let (e, h, c) = (cfg.embed_dim, cfg.hidden_dim, cfg.num_classes);
    b.embedding("embedding", cfg.vocab_size, e);
    let mut gating = Vec::new();
    for gate in ["z", "r", "n"] {
        let w = b.weight(&format!("gru.w_{gate}"), e, h);
        let u = b.weight(&format!("gru.u_{gate}"), h, h);
        let bias = b.bias(&format!("gru.b_{gate}"), h, h);
        gating.push(ParamGating {
            param: w,
            out_handle: Some(0),
            in_handle: None,
        });
        gating.push(ParamGating {
            param: u,
            out_handle: Some(0),
            in_handle: Some(0),
        });
        gating.push(ParamGating {
            param: bias,
            out_handle: Some(0),
            in_handle: None,
        });
    }
    let out_w = b.weight("output.w", h, c);
    b.bias("output.b", h, c);
    debug_assert_eq!(out_w, OUTPUT_W);
    let handles = vec![MaskableLayerHandle {
        layer_id: "gru_state".into(),
        width: h,
    }];
    (handles, gating)
}

pub(super) fn weights(p: &[Var]) -> GruWeights {
    GruWeights {
        w_z: p[1],
        u_z: p[2],
        b_z: p[3],
        w_r: p[4],
        u_r: p[5],
        b_r: p[6],
        w_n: p[7],
        u_n: p[8],
        b_n: p[9],
    }
}

pub(super) fn forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &[Var],
    batch: &Batch,
    gates: Option<&[Var]>,
) -> Result<Var> {
    let w = weights(p);
    let (bsz, len) = (batch.batch, batch.seq_len);
    let emb = tape.embedding(p[EMBEDDING], &batch.time_major_ids())?;
    let xz = tape.matmul(emb, w.w_z)?;
    let xr = tape.matmul(emb, w.w_r)?;
    let xn = tape.matmul(emb, w.w_n)?;
    let mut h = tape.constant(Tensor::zeros(&[bsz, cfg.hidden_dim]))?;
    for t in 0..len {
        let keep: Vec<bool> = (0..bsz).map(|b| batch.mask[b * len + t] == 1.0).collect();
        if !keep.iter().any(|&k| k) {
            continue;
        }
        let sz = tape.slice_rows(xz, t * bsz, bsz)?;
        let sr = tape.slice_rows(xr, t * bsz, bsz)?;
        let sn = tape.slice_rows(xn, t * bsz, bsz)?;
        let next = gru_update(tape, sz, sr, sn, h, &w)?;
        h = if keep.iter().all(|&k| k) {
            next
        } else {
            tape.select_rows(&keep, next, h)?
        };
    }
    if let Some(g) = gates {
        h = tape.mul_row(h, g[0])?;
    }
    linear(tape, h, p[OUTPUT_W], p[OUTPUT_B])
}
