//! Composite building blocks shared by the backbones.

use crate::autograd::{Tape, Tensor, Var};
use crate::error::Result;

/// `x · w + b`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_bias(y, b)
}

/// Update-gate, reset-gate and candidate weights of a GRU layer.
/// Input matrices are `[d × u]`, recurrent ones `[u × u]`, biases `[u]`.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_n: Var,
    pub u_n: Var,
    pub b_n: Var,
}

/// One GRU step over a batch of rows:
///
/// ```text
/// z = σ(x W_z + h U_z + b_z)
/// r = σ(x W_r + h U_r + b_r)
/// n = tanh(x W_n + (r ⊙ h) U_n + b_n)
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
pub fn gru_cell(tape: &mut Tape, x: Var, h_prev: Var, w: &GruWeights) -> Result<Var> {
    let xz = tape.matmul(x, w.w_z)?;
    let xr = tape.matmul(x, w.w_r)?;
    let xn = tape.matmul(x, w.w_n)?;
    gru_update(tape, xz, xr, xn, h_prev, w)
}

/// GRU step given the already projected inputs `x W_*`.
pub(crate) fn gru_update(
    tape: &mut Tape,
    xz: Var,
    xr: Var,
    xn: Var,
    h: Var,
    w: &GruWeights,
) -> Result<Var> {
    let hz = tape.matmul(h, w.u_z)?;
    let z = tape.add(xz, hz)?;
    let z = tape.add_bias(z, w.b_z)?;
    let z = tape.sigmoid(z)?;

    let hr = tape.matmul(h, w.u_r)?;
    let r = tape.add(xr, hr)?;
    let r = tape.add_bias(r, w.b_r)?;
    let r = tape.sigmoid(r)?;

    let rh = tape.mul(r, h)?;
    let hn = tape.matmul(rh, w.u_n)?;
    let n = tape.add(xn, hn)?;
    let n = tape.add_bias(n, w.b_n)?;
    let n = tape.tanh(n)?;

    let keep = tape.one_minus(z)?;
    let kept = tape.mul(keep, h)?;
    let fresh = tape.mul(z, n)?;
    tape.add(kept, fresh)
}

/// Projections of a multi-head self-attention layer, all `[d × d]` / `[d]`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

/// Scaled dot-product self-attention with `heads` heads over `batch`
/// sequences of length `seq`, followed by the output projection. Padded key
/// positions get zero weight.
pub fn self_attention(
    tape: &mut Tape,
    h: Var,
    mask: &[f64],
    batch: usize,
    seq: usize,
    heads: usize,
    w: &AttentionWeights,
) -> Result<Var> {
    let q = linear(tape, h, w.wq, w.bq)?;
    let k = linear(tape, h, w.wk, w.bk)?;
    let v = linear(tape, h, w.wv, w.bv)?;
    let att = tape.attention(q, k, v, mask, batch, seq, heads)?;
    linear(tape, att, w.wo, w.bo)
}

/// Sinusoidal position table `[seq × d]`: `sin(p / 10000^(2i/d))` on even
/// columns and the matching cosine on odd ones.
pub fn sinusoidal_positions(seq: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; seq * d];
    for p in 0..seq {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * pair / d as f64);
            data[p * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(seq, d, data).expect("valid shape")
}
