//! Scaled dot-product attention, multi-head attention and causal masks.

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{BoundParams, ForwardCtx, ModelParameters, Tape, Tensor, Var};
use crate::JobRng;

/// Which (query, key) pairs may interact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allowed: Vec<bool>,
}

impl AttentionMask {
    pub fn new(rows: usize, cols: usize, allowed: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || allowed.len() != rows * cols {
            return Err(Error::contract(format!(
                "mask of {rows}×{cols} needs {} entries, got {}",
                rows * cols,
                allowed.len()
            )));
        }
        Ok(AttentionMask { rows, cols, allowed })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.cols + j]
    }

    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }

    /// Number of keys visible to each query.
    pub fn row_counts(&self) -> Vec<usize> {
        self.allowed
            .chunks_exact(self.cols)
            .map(|r| r.iter().filter(|&&a| a).count())
            .collect()
    }
}

/// Lower-triangular mask: position i sees positions 0..=i.
pub fn causal_mask(n: usize) -> Result<AttentionMask> {
    if n == 0 {
        return Err(Error::contract("causal mask needs n ≥ 1"));
    }
    let allowed = (0..n * n).map(|k| k % n <= k / n).collect();
    AttentionMask::new(n, n, allowed)
}

/// Projection weights of one multi-head attention layer, bound to a tape.
///
/// Each role keeps one fused `d_model × d_model` matrix whose column block
/// `i·d_k..(i+1)·d_k` is head i's projection.
#[derive(Clone, Copy, Debug)]
pub struct MultiHeadWeights {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub heads: usize,
}

impl MultiHeadWeights {
    pub const ROLES: [&'static str; 4] = ["w_q", "w_k", "w_v", "w_o"];

    /// Adds `<prefix>.w_{q,k,v,o}` to `params`, drawn from N(0, std²).
    pub fn register(
        params: &mut ModelParameters,
        prefix: &str,
        d_model: usize,
        heads: usize,
        std: f64,
        rng: &mut JobRng,
    ) -> Result<()> {
        check_heads(d_model, heads)?;
        let normal = Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?;
        for role in Self::ROLES {
            let data = (0..d_model * d_model).map(|_| normal.sample(rng)).collect();
            params.insert(format!("{prefix}.{role}"), Tensor::new(&[d_model, d_model], data)?)?;
        }
        Ok(())
    }

    pub fn bind(bound: &BoundParams<'_>, prefix: &str, heads: usize) -> Result<Self> {
        Ok(MultiHeadWeights {
            w_q: bound.var(&format!("{prefix}.w_q"))?,
            w_k: bound.var(&format!("{prefix}.w_k"))?,
            w_v: bound.var(&format!("{prefix}.w_v"))?,
            w_o: bound.var(&format!("{prefix}.w_o"))?,
            heads,
        })
    }

    /// Parameter count of one layer; independent of the head count.
    pub fn param_count(d_model: usize) -> usize {
        4 * d_model * d_model
    }
}

pub(crate) fn check_heads(d_model: usize, heads: usize) -> Result<()> {
    if heads == 0 || !d_model.is_multiple_of(heads) {
        return Err(Error::config(format!(
            "head count {heads} must divide d_model {d_model}"
        )));
    }
    Ok(())
}

/// softmax(q·kᵀ/√d_k + mask)·v.
///
/// Accepts rank-2 `[L, d]` or batched rank-3 `[B, L, d]` inputs and returns
/// `(output, weights)` with the same rank. Disallowed positions get an
/// additive −1e30 before the softmax, so their weights (and gradients) are
/// exactly zero.
pub fn scaled_dot_product_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&AttentionMask>,
) -> Result<(Var, Var)> {
    sdpa(tape, q, k, v, mask, None)
}

pub(crate) fn sdpa(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&AttentionMask>,
    weight_dropout: Option<(&mut ForwardCtx<'_>, f64)>,
) -> Result<(Var, Var)> {
    let rank = tape.shape(q).len();
    if rank != tape.shape(k).len() || rank != tape.shape(v).len() || !(2..=3).contains(&rank) {
        return Err(Error::shape("attention", tape.shape(q), tape.shape(k)));
    }
    let (q3, k3, v3) = if rank == 2 {
        (lift(tape, q)?, lift(tape, k)?, lift(tape, v)?)
    } else {
        (q, k, v)
    };
    let (sq, sk, sv) = (
        tape.shape(q3).to_vec(),
        tape.shape(k3).to_vec(),
        tape.shape(v3).to_vec(),
    );
    if sq[0] != sk[0] || sk[0] != sv[0] || sq[2] != sk[2] {
        return Err(Error::shape("attention q/k", &sq, &sk));
    }
    if sk[1] != sv[1] {
        return Err(Error::shape("attention k/v", &sk, &sv));
    }
    let (lq, lk, dk) = (sq[1], sk[1], sq[2]);

    let logits = tape.batch_matmul(q3, k3, true)?;
    let mut logits = tape.scale(logits, 1.0 / (dk as f64).sqrt());
    if let Some(m) = mask {
        if m.rows() != lq || m.cols() != lk {
            return Err(Error::shape("attention mask", &[m.rows(), m.cols()], &[lq, lk]));
        }
        if let Some(row) = m.row_counts().iter().position(|&c| c == 0) {
            return Err(Error::contract(format!("query row {row} has no allowed key")));
        }
        logits = tape.add_mask(logits, m.allowed(), lq, lk)?;
    }
    let mut weights = tape.softmax_lastdim(logits);
    let report = weights;
    if let Some((ctx, p)) = weight_dropout {
        weights = ctx.dropout(tape, weights, p)?;
    }
    let out = tape.batch_matmul(weights, v3, false)?;

    if rank == 2 {
        let out = tape.reshape(out, &[lq, sv[2]])?;
        let w = tape.reshape(report, &[lq, lk])?;
        Ok((out, w))
    } else {
        Ok((out, report))
    }
}

fn lift(tape: &mut Tape, x: Var) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    tape.reshape(x, &[1, s[0], s[1]])
}

/// Options for [`multi_head_attention`] beyond the core inputs.
#[derive(Clone, Copy, Debug, Default)]
pub struct AttentionDropout {
    /// Applied to the post-`W_o` output.
    pub output_p: f64,
    /// Applied to the attention weights; 0 disables it.
    pub weights_p: f64,
}

/// Concat(head_1..head_h)·W_o with head_i = Attention(x_q·W_q[i], x_kv·W_k[i], x_kv·W_v[i]).
///
/// `x_q` is `[L_q, d]` or `[B, L_q, d]`; `x_kv` must have the same rank.
pub fn multi_head_attention(
    tape: &mut Tape,
    x_q: Var,
    x_kv: Var,
    w: &MultiHeadWeights,
    mask: Option<&AttentionMask>,
    dropout: AttentionDropout,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var> {
    let rank = tape.shape(x_q).len();
    if rank != tape.shape(x_kv).len() || !(2..=3).contains(&rank) {
        return Err(Error::shape("multi_head_attention", tape.shape(x_q), tape.shape(x_kv)));
    }
    let (xq3, xkv3) = if rank == 2 {
        (lift(tape, x_q)?, lift(tape, x_kv)?)
    } else {
        (x_q, x_kv)
    };
    let (b, lq, d) = dims3(tape.shape(xq3));
    let (bk, lk, dkv) = dims3(tape.shape(xkv3));
    if b != bk || d != dkv || tape.shape(w.w_q) != [d, d] {
        return Err(Error::shape("multi_head_attention", tape.shape(xq3), tape.shape(w.w_q)));
    }
    check_heads(d, w.heads)?;

    let project = |tape: &mut Tape, x: Var, rows: usize, len: usize, weight: Var| -> Result<Var> {
        let flat = tape.reshape(x, &[rows, d])?;
        let p = tape.matmul(flat, weight)?;
        let p = tape.reshape(p, &[b, len, d])?;
        tape.split_heads(p, w.heads)
    };
    let q = project(tape, xq3, b * lq, lq, w.w_q)?;
    let k = project(tape, xkv3, b * lk, lk, w.w_k)?;
    let v = project(tape, xkv3, b * lk, lk, w.w_v)?;

    let weight_dropout = (dropout.weights_p > 0.0).then_some((&mut *ctx, dropout.weights_p));
    let (heads, _) = sdpa(tape, q, k, v, mask, weight_dropout)?;
    let merged = tape.merge_heads(heads, w.heads)?;
    let flat = tape.reshape(merged, &[b * lq, d])?;
    let out = tape.matmul(flat, w.w_o)?;
    let out = ctx.dropout(tape, out, dropout.output_p)?;
    if rank == 2 {
        tape.reshape(out, &[lq, d])
    } else {
        tape.reshape(out, &[b, lq, d])
    }
}

fn dims3(s: &[usize]) -> (usize, usize, usize) {
    (s[0], s[1], s[2])
}
