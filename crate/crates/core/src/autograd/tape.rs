//! Tape-based reverse-mode differentiation.
//!
//! Every primitive appends one node holding its output value and whatever
//! it needs for the backward pass. [`Tape::backward`] walks the nodes in
//! reverse record order, so each op is visited exactly once.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    SliceRows {
        x: Var,
        start: usize,
    },
    SelectRows {
        keep: Vec<bool>,
        a: Var,
        b: Var,
    },
    MaskedMeanPool {
        x: Var,
        mask: Vec<f64>,
        seq_len: usize,
        counts: Vec<f64>,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    KlDiv {
        z_new: Var,
        p_old: Vec<f64>,
        p_new: Vec<f64>,
        temperature: f64,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        probs: Vec<f64>,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    Sum(Var),
    Mean(Var),
}

/// Ordered record of executed primitives plus their gradient slots.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    requires_grad: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
    backward_ran: bool,
}

/// `c (+)= a · b` with explicit strides, `c` row-major `m × n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices whose extents cover every index reachable
    // through the given dims and strides; `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            if accumulate { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn stable_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn log_softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = x - lse;
    }
}

/// Row-wise softmax of a plain tensor (no tape).
pub fn softmax_rows(t: &Tensor) -> Tensor {
    let (r, c) = t.dims2();
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        stable_softmax_row(t.row(i), &mut out[i * c..(i + 1) * c]);
    }
    Tensor::new(t.shape().to_vec(), out).expect("same shape")
}

/// Per-row cross-entropy of plain logits, without recording anything.
pub fn cross_entropy_rows(logits: &Tensor, labels: &[usize]) -> Result<Vec<f64>> {
    let (r, c) = logits.dims2();
    if labels.len() != r {
        return Err(Error::shape(
            "cross_entropy",
            format!("{r} rows vs {} labels", labels.len()),
        ));
    }
    let mut scratch = vec![0.0; c];
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            if y >= c {
                return Err(Error::Index {
                    op: "cross_entropy",
                    index: y,
                    bound: c,
                });
            }
            log_softmax_row(logits.row(i), &mut scratch);
            Ok(-scratch[y])
        })
        .collect()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.requires_grad[v.0]
    }

    /// Gradient of the last backward pass, if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
        self.backward_ran = false;
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        self.values.push(value);
        self.ops.push(op);
        self.requires_grad.push(requires_grad);
        self.grads.push(None);
        Ok(Var(self.values.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        self.push("leaf", value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.requires_grad[v.0])
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.values[a.0].shape(), self.values[b.0].shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn elementwise2(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        let data = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(name, out, op, rg)
    }

    fn map1(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let vx = &self.values[x.0];
        let out = Tensor::new(
            vx.shape().to_vec(),
            vx.data().iter().map(|&v| f(v)).collect(),
        )?;
        let rg = self.rg(&[x]);
        self.push(name, out, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        if va.shape().len() != 2 || vb.shape().len() != 2 {
            return Err(Error::shape("matmul", "operands must be 2-D"));
        }
        let (m, k) = va.dims2();
        let (k2, n) = vb.dims2();
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}x{k}] x [{k2}x{n}]")));
        }
        let mut c = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            va.data(),
            (k as isize, 1),
            vb.data(),
            (n as isize, 1),
            &mut c,
            false,
        );
        let out = Tensor::matrix(m, n, c)?;
        let rg = self.rg(&[a, b]);
        self.push("matmul", out, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise2("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        name: &'static str,
        x: Var,
        v: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (vx, vv) = (&self.values[x.0], &self.values[v.0]);
        let (r, c) = vx.dims2();
        if vv.len() != c {
            return Err(Error::shape(
                name,
                format!("row width {c} vs vector {}", vv.len()),
            ));
        }
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend(vx.row(i).iter().zip(vv.data()).map(|(&a, &b)| f(a, b)));
        }
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(&[x, v]);
        self.push(name, out, op, rg)
    }

    /// `x[r×c] + bias[c]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.row_broadcast("add_bias", x, bias, |a, b| a + b, Op::AddBias(x, bias))
    }

    /// `x[r×c] ⊙ gate[c]` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, gate: Var) -> Result<Var> {
        self.row_broadcast("mul_row", x, gate, |a, b| a * b, Op::MulRow(x, gate))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.map1("scale", x, |v| v * s, Op::Scale(x, s))
    }

    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.map1("one_minus", x, |v| 1.0 - v, Op::OneMinus(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.map1("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.map1("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.map1("relu", x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    /// Inverted dropout. Outside training (or with `p == 0`) this is the identity
    /// and records nothing.
    pub fn dropout(&mut self, x: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!(
                "dropout probability {p} not in [0, 1)"
            )));
        }
        if !train || p == 0.0 {
            return Ok(x);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 / (1.0 - p);
        let vx = &self.values[x.0];
        let mask: Vec<f64> = (0..vx.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = vx.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(&[x]);
        self.push("dropout", out, Op::Dropout(x, mask), rg)
    }

    /// Gathers rows of `table[V×d]`; the backward pass scatter-adds.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = &self.values[table.0];
        let (v, d) = vt.dims2();
        if ids.is_empty() {
            return Err(Error::shape("embedding", "no ids"));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(vt.row(id));
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        let rg = self.rg(&[table]);
        self.push(
            "embedding",
            out,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        )
    }

    /// Contiguous block of `len` rows starting at `start`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let vx = &self.values[x.0];
        let (r, c) = vx.dims2();
        if len == 0 || start + len > r {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {r}", start + len),
            ));
        }
        let out = Tensor::matrix(len, c, vx.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(&[x]);
        self.push("slice_rows", out, Op::SliceRows { x, start }, rg)
    }

    /// Row `i` of the result is row `i` of `a` where `keep[i]`, else of `b`.
    pub fn select_rows(&mut self, keep: &[bool], a: Var, b: Var) -> Result<Var> {
        self.same_shape("select_rows", a, b)?;
        let (va, vb) = (&self.values[a.0], &self.values[b.0]);
        let (r, _) = va.dims2();
        if keep.len() != r {
            return Err(Error::shape(
                "select_rows",
                format!("{} flags for {r} rows", keep.len()),
            ));
        }
        let mut data = Vec::with_capacity(va.len());
        for (i, &k) in keep.iter().enumerate() {
            data.extend_from_slice(if k { va.row(i) } else { vb.row(i) });
        }
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(
            "select_rows",
            out,
            Op::SelectRows {
                keep: keep.to_vec(),
                a,
                b,
            },
            rg,
        )
    }

    /// Mean over the unmasked rows of each length-`seq_len` segment of
    /// `x[(B·seq_len)×d]`, giving `[B×d]`.
    pub fn masked_mean_pool(&mut self, x: Var, mask: &[f64], seq_len: usize) -> Result<Var> {
        let vx = &self.values[x.0];
        let (r, d) = vx.dims2();
        if seq_len == 0 || r % seq_len != 0 || mask.len() != r {
            return Err(Error::shape(
                "masked_mean_pool",
                format!("{r} rows, mask {}, seq_len {seq_len}", mask.len()),
            ));
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::shape(
                "masked_mean_pool",
                "mask entries must be 0 or 1",
            ));
        }
        let batch = r / seq_len;
        let mut counts = Vec::with_capacity(batch);
        let mut data = vec![0.0; batch * d];
        for b in 0..batch {
            let n: f64 = mask[b * seq_len..(b + 1) * seq_len].iter().sum();
            if n == 0.0 {
                return Err(Error::EmptySequence {
                    op: "masked_mean_pool",
                });
            }
            counts.push(n);
            let out = &mut data[b * d..(b + 1) * d];
            for t in 0..seq_len {
                if mask[b * seq_len + t] == 1.0 {
                    for (o, &v) in out.iter_mut().zip(vx.row(b * seq_len + t)) {
                        *o += v;
                    }
                }
            }
            for o in out.iter_mut() {
                *o /= n;
            }
        }
        let out = Tensor::matrix(batch, d, data)?;
        let rg = self.rg(&[x]);
        self.push(
            "masked_mean_pool",
            out,
            Op::MaskedMeanPool {
                x,
                mask: mask.to_vec(),
                seq_len,
                counts,
            },
            rg,
        )
    }

    /// Normalizes each row to zero mean and unit variance, then applies
    /// `gain[c]` and `bias[c]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (vx, vg, vb) = (
            &self.values[x.0],
            &self.values[gain.0],
            &self.values[bias.0],
        );
        let (r, c) = vx.dims2();
        if vg.len() != c || vb.len() != c {
            return Err(Error::shape(
                "layer_norm",
                format!("width {c}, gain {}, bias {}", vg.len(), vb.len()),
            ));
        }
        let mut xhat = vec![0.0; r * c];
        let mut inv_std = Vec::with_capacity(r);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            let row = vx.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..c {
                let h = (row[j] - mean) * inv;
                xhat[i * c + j] = h;
                data[i * c + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.rg(&[x, gain, bias]);
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            rg,
        )
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = softmax_rows(&self.values[x.0]);
        let rg = self.rg(&[x]);
        self.push("softmax", out, Op::Softmax(x), rg)
    }

    /// Mean over rows of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let vl = &self.values[logits.0];
        let (r, c) = vl.dims2();
        let losses = cross_entropy_rows(vl, labels)?;
        let mut probs = vec![0.0; r * c];
        for i in 0..r {
            stable_softmax_row(vl.row(i), &mut probs[i * c..(i + 1) * c]);
        }
        let mean = losses.iter().sum::<f64>() / r as f64;
        let rg = self.rg(&[logits]);
        self.push(
            "cross_entropy",
            Tensor::scalar(mean),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Mean over rows of `KL(softmax(z_old/T) ‖ softmax(z_new/T))`.
    /// `z_old` is a frozen target, so gradient flows only into `z_new`.
    pub fn kl_div_temperature(
        &mut self,
        z_old: &Tensor,
        z_new: Var,
        temperature: f64,
    ) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let vn = &self.values[z_new.0];
        if vn.shape() != z_old.shape() {
            return Err(Error::shape(
                "kl_div_temperature",
                format!("{:?} vs {:?}", z_old.shape(), vn.shape()),
            ));
        }
        let (r, c) = vn.dims2();
        let mut p_old = vec![0.0; r * c];
        let mut p_new = vec![0.0; r * c];
        let mut lp_old = vec![0.0; c];
        let mut lp_new = vec![0.0; c];
        let mut scaled = vec![0.0; c];
        let mut total = 0.0;
        for i in 0..r {
            for (s, &z) in scaled.iter_mut().zip(z_old.row(i)) {
                *s = z / temperature;
            }
            log_softmax_row(&scaled, &mut lp_old);
            for (s, &z) in scaled.iter_mut().zip(vn.row(i)) {
                *s = z / temperature;
            }
            log_softmax_row(&scaled, &mut lp_new);
            let mut kl = 0.0;
            for j in 0..c {
                let po = lp_old[j].exp();
                p_old[i * c + j] = po;
                p_new[i * c + j] = lp_new[j].exp();
                if po > 0.0 {
                    kl += po * (lp_old[j] - lp_new[j]);
                }
            }
            total += kl.max(0.0);
        }
        let rg = self.rg(&[z_new]);
        self.push(
            "kl_div_temperature",
            Tensor::scalar(total / r as f64),
            Op::KlDiv {
                z_new,
                p_old,
                p_new,
                temperature,
            },
            rg,
        )
    }

    /// Multi-head scaled dot-product attention over `batch` sequences of
    /// length `seq`. `q`, `k`, `v` are `[(batch·seq)×d]`; key positions with
    /// `mask == 0` receive zero weight.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        mask: &[f64],
        batch: usize,
        seq: usize,
        heads: usize,
    ) -> Result<Var> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let (rows, d) = self.values[q.0].dims2();
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!(
                "model width {d} not divisible by {heads} heads"
            )));
        }
        if rows != batch * seq || mask.len() != rows {
            return Err(Error::shape(
                "attention",
                format!("{rows} rows for {batch}x{seq}, mask {}", mask.len()),
            ));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (vq, vk, vv) = (&self.values[q.0], &self.values[k.0], &self.values[v.0]);
        let (qd, kd, vd) = (vq.data(), vk.data(), vv.data());
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = vec![0.0; rows * d];
        let mut scores = vec![0.0; seq];
        for b in 0..batch {
            if mask[b * seq..(b + 1) * seq].iter().all(|&m| m == 0.0) {
                return Err(Error::EmptySequence { op: "attention" });
            }
            for h in 0..heads {
                let off = h * dh;
                for i in 0..seq {
                    let qi = &qd[(b * seq + i) * d + off..][..dh];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..seq {
                        if mask[b * seq + j] == 0.0 {
                            scores[j] = f64::NEG_INFINITY;
                            continue;
                        }
                        let kj = &kd[(b * seq + j) * d + off..][..dh];
                        let s = qi.iter().zip(kj).map(|(a, c)| a * c).sum::<f64>() * scale;
                        scores[j] = s;
                        max = max.max(s);
                    }
                    let p = &mut probs[((b * heads + h) * seq + i) * seq..][..seq];
                    let mut sum = 0.0;
                    for j in 0..seq {
                        p[j] = if scores[j] == f64::NEG_INFINITY {
                            0.0
                        } else {
                            (scores[j] - max).exp()
                        };
                        sum += p[j];
                    }
                    let o = &mut out[(b * seq + i) * d + off..][..dh];
                    for j in 0..seq {
                        p[j] /= sum;
                        if p[j] == 0.0 {
                            continue;
                        }
                        let vj = &vd[(b * seq + j) * d + off..][..dh];
                        for (oo, &vv) in o.iter_mut().zip(vj) {
                            *oo += p[j] * vv;
                        }
                    }
                }
            }
        }
        let out = Tensor::matrix(rows, d, out)?;
        let rg = self.rg(&[q, k, v]);
        self.push(
            "attention",
            out,
            Op::Attention {
                q,
                k,
                v,
                probs,
                batch,
                seq,
                heads,
            },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.values[x.0].data().iter().sum();
        let rg = self.rg(&[x]);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let vx = &self.values[x.0];
        let s = vx.data().iter().sum::<f64>() / vx.len() as f64;
        let rg = self.rg(&[x]);
        self.push("mean", Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Populates gradients of every `requires_grad` ancestor of `loss`.
    ///
    /// Gradients are not accumulated across calls: a second call before
    /// [`Tape::zero_grad`] is an error.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_ran {
            return Err(Error::Backward(
                "gradients already populated; call zero_grad first".into(),
            ));
        }
        if loss.0 >= self.values.len() {
            return Err(Error::Backward("loss is not on this tape".into()));
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                self.values[loss.0].shape()
            )));
        }
        if !self.requires_grad[loss.0] {
            return Err(Error::Backward(
                "loss does not depend on any differentiable value".into(),
            ));
        }
        self.backward_ran = true;
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.requires_grad[idx] {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn backprop_node(&mut self, idx: usize, g: &[f64]) {
        let values = &self.values;
        let req = &self.requires_grad;
        let grads = &mut self.grads;
        let out = &values[idx];

        macro_rules! buf {
            ($v:expr) => {{
                let v: Var = $v;
                if req[v.0] {
                    Some(grads[v.0].get_or_insert_with(|| vec![0.0; values[v.0].len()]))
                } else {
                    None
                }
            }};
        }

        match &self.ops[idx] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&values[a.0], &values[b.0]);
                let (m, k) = va.dims2();
                let (_, n) = vb.dims2();
                if let Some(ga) = buf!(*a) {
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        (n as isize, 1),
                        vb.data(),
                        (1, n as isize),
                        ga,
                        true,
                    );
                }
                if let Some(gb) = buf!(*b) {
                    gemm(
                        k,
                        m,
                        n,
                        va.data(),
                        (1, k as isize),
                        g,
                        (n as isize, 1),
                        gb,
                        true,
                    );
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = buf!(v) {
                        gv.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = buf!(*a) {
                    ga.iter_mut().zip(g).for_each(|(x, &d)| *x += d);
                }
                if let Some(gb) = buf!(*b) {
                    gb.iter_mut().zip(g).for_each(|(x, &d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                let (da, db) = (values[a.0].data(), values[b.0].data());
                if let Some(ga) = buf!(*a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * db[i];
                    }
                }
                if let Some(gb) = buf!(*b) {
                    for i in 0..g.len() {
                        gb[i] += g[i] * da[i];
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(gx) = buf!(*x) {
                    gx.iter_mut().zip(g).for_each(|(a, &d)| *a += d);
                }
                let c = values[bias.0].len();
                if let Some(gb) = buf!(*bias) {
                    for row in g.chunks(c) {
                        gb.iter_mut().zip(row).for_each(|(a, &d)| *a += d);
                    }
                }
            }
            Op::MulRow(x, gate) => {
                let c = values[gate.0].len();
                let (dx, dg) = (values[x.0].data(), values[gate.0].data());
                if let Some(gx) = buf!(*x) {
                    for (i, (a, &d)) in gx.iter_mut().zip(g).enumerate() {
                        *a += d * dg[i % c];
                    }
                }
                if let Some(gg) = buf!(*gate) {
                    for (i, &d) in g.iter().enumerate() {
                        gg[i % c] += d * dx[i];
                    }
                }
            }
            Op::Scale(x, s) => {
                if let Some(gx) = buf!(*x) {
                    gx.iter_mut().zip(g).for_each(|(a, &d)| *a += d * s);
                }
            }
            Op::OneMinus(x) => {
                if let Some(gx) = buf!(*x) {
                    gx.iter_mut().zip(g).for_each(|(a, &d)| *a -= d);
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = buf!(*x) {
                    for ((a, &d), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *a += d * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = buf!(*x) {
                    for ((a, &d), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *a += d * (1.0 - y * y);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(gx) = buf!(*x) {
                    for ((a, &d), &y) in gx.iter_mut().zip(g).zip(out.data()) {
                        if y > 0.0 {
                            *a += d;
                        }
                    }
                }
            }
            Op::Dropout(x, mask) => {
                if let Some(gx) = buf!(*x) {
                    for ((a, &d), &m) in gx.iter_mut().zip(g).zip(mask) {
                        *a += d * m;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                let d = values[table.0].dims2().1;
                if let Some(gt) = buf!(*table) {
                    for (row, &id) in g.chunks(d).zip(ids) {
                        gt[id * d..(id + 1) * d]
                            .iter_mut()
                            .zip(row)
                            .for_each(|(a, &v)| *a += v);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let c = values[x.0].dims2().1;
                if let Some(gx) = buf!(*x) {
                    gx[start * c..start * c + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(a, &d)| *a += d);
                }
            }
            Op::SelectRows { keep, a, b } => {
                let c = values[a.0].dims2().1;
                for (target, want) in [(*a, true), (*b, false)] {
                    if let Some(gt) = buf!(target) {
                        for (i, &k) in keep.iter().enumerate() {
                            if k == want {
                                gt[i * c..(i + 1) * c]
                                    .iter_mut()
                                    .zip(&g[i * c..(i + 1) * c])
                                    .for_each(|(x, &d)| *x += d);
                            }
                        }
                    }
                }
            }
            Op::MaskedMeanPool {
                x,
                mask,
                seq_len,
                counts,
            } => {
                let d = values[x.0].dims2().1;
                if let Some(gx) = buf!(*x) {
                    for (b, &n) in counts.iter().enumerate() {
                        let gb = &g[b * d..(b + 1) * d];
                        for t in 0..*seq_len {
                            let r = b * seq_len + t;
                            if mask[r] == 1.0 {
                                gx[r * d..(r + 1) * d]
                                    .iter_mut()
                                    .zip(gb)
                                    .for_each(|(a, &v)| *a += v / n);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = values[gain.0].len();
                let gd = values[gain.0].data();
                if let Some(gg) = buf!(*gain) {
                    for (i, &d) in g.iter().enumerate() {
                        gg[i % c] += d * xhat[i];
                    }
                }
                if let Some(gb) = buf!(*bias) {
                    for (i, &d) in g.iter().enumerate() {
                        gb[i % c] += d;
                    }
                }
                if let Some(gx) = buf!(*x) {
                    let n = c as f64;
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let rows = r * c..(r + 1) * c;
                        let dy = &g[rows.clone()];
                        let xh = &xhat[rows.clone()];
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..c {
                            let dxh = dy[j] * gd[j];
                            s1 += dxh;
                            s2 += dxh * xh[j];
                        }
                        for j in 0..c {
                            let dxh = dy[j] * gd[j];
                            gx[r * c + j] += inv / n * (n * dxh - s1 - xh[j] * s2);
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                let c = out.dims2().1;
                if let Some(gx) = buf!(*x) {
                    for (r, (dy, y)) in g.chunks(c).zip(out.data().chunks(c)).enumerate() {
                        let dot: f64 = dy.iter().zip(y).map(|(a, b)| a * b).sum();
                        for j in 0..c {
                            gx[r * c + j] += y[j] * (dy[j] - dot);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let rows = labels.len();
                let c = probs.len() / rows;
                let s = g[0] / rows as f64;
                if let Some(gl) = buf!(*logits) {
                    for (r, &y) in labels.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == y { 1.0 } else { 0.0 };
                            gl[r * c + j] += s * (probs[r * c + j] - onehot);
                        }
                    }
                }
            }
            Op::KlDiv {
                z_new,
                p_old,
                p_new,
                temperature,
            } => {
                let rows = values[z_new.0].dims2().0;
                let s = g[0] / (rows as f64 * temperature);
                if let Some(gz) = buf!(*z_new) {
                    for i in 0..gz.len() {
                        gz[i] += s * (p_new[i] - p_old[i]);
                    }
                }
            }
            Op::Attention {
                q,
                k,
                v,
                probs,
                batch,
                seq,
                heads,
            } => {
                let (batch, seq, heads) = (*batch, *seq, *heads);
                let d = values[q.0].dims2().1;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qd, kd, vd) = (values[q.0].data(), values[k.0].data(), values[v.0].data());
                let mut gq = vec![0.0; qd.len()];
                let mut gk = vec![0.0; kd.len()];
                let mut gv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; seq];
                for b in 0..batch {
                    for h in 0..heads {
                        let off = h * dh;
                        for i in 0..seq {
                            let p = &probs[((b * heads + h) * seq + i) * seq..][..seq];
                            let go = &g[(b * seq + i) * d + off..][..dh];
                            let mut dot = 0.0;
                            for j in 0..seq {
                                if p[j] == 0.0 {
                                    dp[j] = 0.0;
                                    continue;
                                }
                                let vj = &vd[(b * seq + j) * d + off..][..dh];
                                dp[j] = go.iter().zip(vj).map(|(a, c)| a * c).sum();
                                dot += p[j] * dp[j];
                                let gvj = &mut gv[(b * seq + j) * d + off..][..dh];
                                gvj.iter_mut().zip(go).for_each(|(a, &o)| *a += p[j] * o);
                            }
                            let qi = &qd[(b * seq + i) * d + off..][..dh];
                            for j in 0..seq {
                                if p[j] == 0.0 {
                                    continue;
                                }
                                let ds = p[j] * (dp[j] - dot) * scale;
                                let kj = &kd[(b * seq + j) * d + off..][..dh];
                                let gqi = &mut gq[(b * seq + i) * d + off..][..dh];
                                gqi.iter_mut().zip(kj).for_each(|(a, &kk)| *a += ds * kk);
                                let gkj = &mut gk[(b * seq + j) * d + off..][..dh];
                                gkj.iter_mut().zip(qi).for_each(|(a, &qq)| *a += ds * qq);
                            }
                        }
                    }
                }
                for (target, local) in [(*q, gq), (*k, gk), (*v, gv)] {
                    if let Some(gt) = buf!(target) {
                        gt.iter_mut().zip(&local).for_each(|(a, &d)| *a += d);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = buf!(*x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::Mean(x) => {
                let n = values[x.0].len() as f64;
                if let Some(gx) = buf!(*x) {
                    gx.iter_mut().for_each(|a| *a += g[0] / n);
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
