use std::sync::atomic::{AtomicBool, Ordering};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use super::config::TransformerConfig;
use super::positional::{positional_encoding, PositionalEncoding};
use crate::attention::{causal_mask, multi_head_attention, AttentionDropout, MultiHeadWeights};
use crate::error::{Error, Result};
use crate::tensor::{BoundParams, ForwardCtx, ModelParameters, Tape, Tensor, Var};
use crate::JobRng;

/// Tolerance on the [-1, 1] input range before a warning is logged.
const RANGE_SLACK: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct LayerNormWeights {
    pub gain: Var,
    pub bias: Var,
}

/// max(0, x·W_1 + b_1)·W_2 + b_2
#[derive(Clone, Copy, Debug)]
pub struct FfnWeights {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderBlock {
    pub self_attn: MultiHeadWeights,
    pub ffn: FfnWeights,
    pub norms: [LayerNormWeights; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderBlock {
    pub self_attn: MultiHeadWeights,
    pub cross_attn: MultiHeadWeights,
    pub ffn: FfnWeights,
    pub norms: [LayerNormWeights; 3],
}

fn bind_norm(bound: &BoundParams<'_>, prefix: &str) -> Result<LayerNormWeights> {
    Ok(LayerNormWeights {
        gain: bound.var(&format!("{prefix}.gain"))?,
        bias: bound.var(&format!("{prefix}.bias"))?,
    })
}

fn bind_ffn(bound: &BoundParams<'_>, prefix: &str) -> Result<FfnWeights> {
    Ok(FfnWeights {
        w1: bound.var(&format!("{prefix}.w1"))?,
        b1: bound.var(&format!("{prefix}.b1"))?,
        w2: bound.var(&format!("{prefix}.w2"))?,
        b2: bound.var(&format!("{prefix}.b2"))?,
    })
}

impl EncoderBlock {
    pub fn bind(bound: &BoundParams<'_>, index: usize, heads: usize) -> Result<Self> {
        let p = format!("encoder.{index}");
        Ok(EncoderBlock {
            self_attn: MultiHeadWeights::bind(bound, &format!("{p}.self_attn"), heads)?,
            ffn: bind_ffn(bound, &format!("{p}.ffn"))?,
            norms: [
                bind_norm(bound, &format!("{p}.ln1"))?,
                bind_norm(bound, &format!("{p}.ln2"))?,
            ],
        })
    }
}

impl DecoderBlock {
    pub fn bind(bound: &BoundParams<'_>, index: usize, heads: usize) -> Result<Self> {
        let p = format!("decoder.{index}");
        Ok(DecoderBlock {
            self_attn: MultiHeadWeights::bind(bound, &format!("{p}.self_attn"), heads)?,
            cross_attn: MultiHeadWeights::bind(bound, &format!("{p}.cross_attn"), heads)?,
            ffn: bind_ffn(bound, &format!("{p}.ffn"))?,
            norms: [
                bind_norm(bound, &format!("{p}.ln1"))?,
                bind_norm(bound, &format!("{p}.ln2"))?,
                bind_norm(bound, &format!("{p}.ln3"))?,
            ],
        })
    }
}

/// Runs `f` on a `[rows, d]` view of a rank-2 or rank-3 tensor and restores
/// the original shape.
fn rowwise(tape: &mut Tape, x: Var, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let d = *shape.last().unwrap();
    let rows = shape.iter().product::<usize>() / d;
    let flat = tape.reshape(x, &[rows, d])?;
    let y = f(tape, flat)?;
    let out_d = *tape.shape(y).last().unwrap();
    let mut out_shape = shape;
    *out_shape.last_mut().unwrap() = out_d;
    tape.reshape(y, &out_shape)
}

/// Position-wise feed-forward network over the last dimension.
pub fn ffn_forward(tape: &mut Tape, x: Var, w: &FfnWeights) -> Result<Var> {
    rowwise(tape, x, |tape, flat| {
        let h = tape.matmul(flat, w.w1)?;
        let h = tape.add_bias(h, w.b1)?;
        let h = tape.relu(h);
        let o = tape.matmul(h, w.w2)?;
        tape.add_bias(o, w.b2)
    })
}

/// (window·proj)·√d_model + PE[0..L], then dropout.
///
/// `window` is `[L, 1]` or `[B, L, 1]`; the result is `[L, d]` or `[B, L, d]`.
pub fn embed(
    tape: &mut Tape,
    window: Var,
    proj: Var,
    pe: &PositionalEncoding,
    dropout_p: f64,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var> {
    let shape = tape.shape(window).to_vec();
    let (batch, len) = match shape[..] {
        [l, 1] => (1, l),
        [b, l, 1] => (b, l),
        _ => return Err(Error::shape("embed", &shape, tape.shape(proj))),
    };
    let d = pe.d_model();
    if tape.shape(proj) != [1, d] {
        return Err(Error::shape("embed", &shape, tape.shape(proj)));
    }
    let pe_rows = pe.rows(len)?.repeat(batch);
    let flat = tape.reshape(window, &[batch * len, 1])?;
    let e = tape.matmul(flat, proj)?;
    let e = tape.scale(e, (d as f64).sqrt());
    let pos = tape.constant(&[batch * len, d], pe_rows)?;
    let e = tape.add(e, pos)?;
    let e = ctx.dropout(tape, e, dropout_p)?;
    if shape.len() == 2 {
        tape.reshape(e, &[len, d])
    } else {
        tape.reshape(e, &[batch, len, d])
    }
}

fn sublayer_dropout(cfg: &TransformerConfig) -> AttentionDropout {
    AttentionDropout {
        output_p: cfg.dropout_p,
        weights_p: cfg.attn_dropout_p,
    }
}

/// Post-norm encoder stack: x ← LN(x + MHA(x, x)); x ← LN(x + FFN(x)).
pub fn encoder_forward(
    tape: &mut Tape,
    x: Var,
    blocks: &[EncoderBlock],
    cfg: &TransformerConfig,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var> {
    let mut x = x;
    for b in blocks {
        let a = multi_head_attention(tape, x, x, &b.self_attn, None, sublayer_dropout(cfg), ctx)?;
        let r = tape.add(x, a)?;
        x = tape.layer_norm(r, b.norms[0].gain, b.norms[0].bias, cfg.eps_layernorm)?;
        let f = ffn_forward(tape, x, &b.ffn)?;
        let f = ctx.dropout(tape, f, cfg.dropout_p)?;
        let r = tape.add(x, f)?;
        x = tape.layer_norm(r, b.norms[1].gain, b.norms[1].bias, cfg.eps_layernorm)?;
    }
    Ok(x)
}

/// Post-norm decoder stack: causal self-attention over the queries,
/// unmasked cross-attention over `memory`, then the FFN.
pub fn decoder_forward(
    tape: &mut Tape,
    queries: Var,
    memory: Var,
    blocks: &[DecoderBlock],
    cfg: &TransformerConfig,
    ctx: &mut ForwardCtx<'_>,
) -> Result<Var> {
    if blocks.is_empty() {
        return Ok(queries);
    }
    let shape = tape.shape(queries);
    let m = shape[shape.len() - 2];
    let mask = causal_mask(m)?;
    let eps = cfg.eps_layernorm;
    let mut x = queries;
    for b in blocks {
        let a = multi_head_attention(tape, x, x, &b.self_attn, Some(&mask), sublayer_dropout(cfg), ctx)?;
        let r = tape.add(x, a)?;
        x = tape.layer_norm(r, b.norms[0].gain, b.norms[0].bias, eps)?;
        let c = multi_head_attention(tape, x, memory, &b.cross_attn, None, sublayer_dropout(cfg), ctx)?;
        let r = tape.add(x, c)?;
        x = tape.layer_norm(r, b.norms[1].gain, b.norms[1].bias, eps)?;
        let f = ffn_forward(tape, x, &b.ffn)?;
        let f = ctx.dropout(tape, f, cfg.dropout_p)?;
        let r = tape.add(x, f)?;
        x = tape.layer_norm(r, b.norms[2].gain, b.norms[2].bias, eps)?;
    }
    Ok(x)
}

/// The encoder-decoder forecaster.
///
/// The decoder input is one learned query token per horizon step plus its
/// positional encoding, so all `horizon` steps come out of a single pass.
#[derive(Clone, Debug)]
pub struct Transformer {
    cfg: TransformerConfig,
    pe: PositionalEncoding,
}

pub const INPUT_PROJ: &str = "embed.proj";
pub const OUTPUT_PROJ: &str = "embed.out_proj";
pub const OUTPUT_BIAS: &str = "head.bias";
pub const QUERY_TOKENS: &str = "decoder.query";

impl Transformer {
    pub fn new(cfg: TransformerConfig) -> Result<Self> {
        cfg.validate()?;
        let pe = positional_encoding(cfg.seq_len.max(cfg.horizon), cfg.d_model)?;
        Ok(Transformer { cfg, pe })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.cfg
    }

    pub fn positional(&self) -> &PositionalEncoding {
        &self.pe
    }

    /// Weights ~ N(0, init_std²), layer-norm gains 1, biases 0.
    pub fn init_parameters(&self, seed: u64) -> Result<ModelParameters> {
        let c = &self.cfg;
        let d = c.d_model;
        let mut init = Init::new(seed, c.init_std)?;
        let mut p = ModelParameters::new();

        p.insert(INPUT_PROJ, init.normal(&[1, d])?)?;
        if !c.tie_embeddings {
            p.insert(OUTPUT_PROJ, init.normal(&[d, 1])?)?;
        }
        p.insert(OUTPUT_BIAS, Tensor::zeros(&[1])?)?;

        for i in 0..c.n_layers {
            let pre = format!("encoder.{i}");
            init.attention(&mut p, &format!("{pre}.self_attn"), d, c.n_heads)?;
            init.ffn(&mut p, &format!("{pre}.ffn"), d, c.d_ff)?;
            add_norm(&mut p, &format!("{pre}.ln1"), d)?;
            add_norm(&mut p, &format!("{pre}.ln2"), d)?;
        }
        p.insert(QUERY_TOKENS, init.normal(&[c.horizon, d])?)?;
        for i in 0..c.n_layers {
            let pre = format!("decoder.{i}");
            init.attention(&mut p, &format!("{pre}.self_attn"), d, c.n_heads)?;
            init.attention(&mut p, &format!("{pre}.cross_attn"), d, c.n_heads)?;
            init.ffn(&mut p, &format!("{pre}.ffn"), d, c.d_ff)?;
            for ln in ["ln1", "ln2", "ln3"] {
                add_norm(&mut p, &format!("{pre}.{ln}"), d)?;
            }
        }
        Ok(p)
    }

    /// Number of trainable scalars `init_parameters` creates, without
    /// allocating them.
    pub fn param_count(&self) -> usize {
        let c = &self.cfg;
        let d = c.d_model;
        let attn = MultiHeadWeights::param_count(d);
        let ffn = 2 * d * c.d_ff + c.d_ff + d;
        let norm = 2 * d;
        let encoder = attn + ffn + 2 * norm;
        let decoder = 2 * attn + ffn + 3 * norm;
        let head = if c.tie_embeddings { 0 } else { d } + 1;
        d + head + c.horizon * d + c.n_layers * (encoder + decoder)
    }

    pub fn encoder_blocks(&self, bound: &BoundParams<'_>) -> Result<Vec<EncoderBlock>> {
        (0..self.cfg.n_layers)
            .map(|i| EncoderBlock::bind(bound, i, self.cfg.n_heads))
            .collect()
    }

    pub fn decoder_blocks(&self, bound: &BoundParams<'_>) -> Result<Vec<DecoderBlock>> {
        (0..self.cfg.n_layers)
            .map(|i| DecoderBlock::bind(bound, i, self.cfg.n_heads))
            .collect()
    }

    /// Query tokens plus positional encoding, `[B, m, d]`.
    pub fn decoder_queries(
        &self,
        tape: &mut Tape,
        bound: &BoundParams<'_>,
        batch: usize,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let (m, d) = (self.cfg.horizon, self.cfg.d_model);
        let tokens = bound.var(QUERY_TOKENS)?;
        let tiled = tape.tile_rows(tokens, batch)?;
        let pos = tape.constant(&[batch * m, d], self.pe.rows(m)?.repeat(batch))?;
        let q = tape.add(tiled, pos)?;
        let q = ctx.dropout(tape, q, self.cfg.dropout_p)?;
        tape.reshape(q, &[batch, m, d])
    }

    /// Output head weight `[d, 1]`: the transposed input projection when
    /// embeddings are tied.
    pub fn output_weight(&self, tape: &mut Tape, bound: &BoundParams<'_>) -> Result<Var> {
        if self.cfg.tie_embeddings {
            let proj = bound.var(INPUT_PROJ)?;
            tape.transpose(proj)
        } else {
            bound.var(OUTPUT_PROJ)
        }
    }

    /// Batched forward pass: `[B, L, 1]` windows → `[B, m, 1]` forecasts.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams<'_>,
        window: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        let c = &self.cfg;
        let shape = tape.shape(window).to_vec();
        if shape.len() != 3 || shape[1] != c.seq_len || shape[2] != 1 {
            return Err(Error::shape("transformer input", &shape, &[0, c.seq_len, 1]));
        }
        warn_if_unnormalized(tape.value(window));
        let batch = shape[0];

        let x = embed(tape, window, bound.var(INPUT_PROJ)?, &self.pe, c.dropout_p, ctx)?;
        let memory = encoder_forward(tape, x, &self.encoder_blocks(bound)?, c, ctx)?;
        let queries = self.decoder_queries(tape, bound, batch, ctx)?;
        let dec = decoder_forward(tape, queries, memory, &self.decoder_blocks(bound)?, c, ctx)?;

        let flat = tape.reshape(dec, &[batch * c.horizon, c.d_model])?;
        let w_out = self.output_weight(tape, bound)?;
        let y = tape.matmul(flat, w_out)?;
        let y = tape.add_bias(y, bound.var(OUTPUT_BIAS)?)?;
        tape.reshape(y, &[batch, c.horizon, 1])
    }
}

struct Init {
    rng: JobRng,
    normal: Normal<f64>,
    std: f64,
}

impl Init {
    fn new(seed: u64, std: f64) -> Result<Self> {
        Ok(Init {
            rng: JobRng::seed_from_u64(seed),
            normal: Normal::new(0.0, std).map_err(|e| Error::config(e.to_string()))?,
            std,
        })
    }

    fn normal(&mut self, shape: &[usize]) -> Result<Tensor> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| self.normal.sample(&mut self.rng)).collect())
    }

    fn attention(&mut self, p: &mut ModelParameters, prefix: &str, d: usize, heads: usize) -> Result<()> {
        MultiHeadWeights::register(p, prefix, d, heads, self.std, &mut self.rng)
    }

    fn ffn(&mut self, p: &mut ModelParameters, prefix: &str, d: usize, d_ff: usize) -> Result<()> {
        p.insert(format!("{prefix}.w1"), self.normal(&[d, d_ff])?)?;
        p.insert(format!("{prefix}.b1"), Tensor::zeros(&[d_ff])?)?;
        p.insert(format!("{prefix}.w2"), self.normal(&[d_ff, d])?)?;
        p.insert(format!("{prefix}.b2"), Tensor::zeros(&[d])?)
    }
}

fn add_norm(p: &mut ModelParameters, prefix: &str, d: usize) -> Result<()> {
    p.insert(format!("{prefix}.gain"), Tensor::ones(&[d])?)?;
    p.insert(format!("{prefix}.bias"), Tensor::zeros(&[d])?)
}

/// Logged once per process: test windows scaled with training extrema
/// routinely stray slightly outside the range.
fn warn_if_unnormalized(values: &[f64]) {
    static WARNED: AtomicBool = AtomicBool::new(false);
    if let Some(v) = values.iter().find(|v| v.abs() > 1.0 + RANGE_SLACK) {
        if !WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("input value {v} lies outside the normalized range [-1, 1]");
        }
    }
}

/// Single-window inference in evaluation mode: `[L, 1]` → `[m, 1]`.
pub fn transformer_forward(window: &Tensor, params: &ModelParameters, cfg: &TransformerConfig) -> Result<Tensor> {
    let model = Transformer::new(cfg.clone())?;
    let shape = window.shape();
    if shape != [cfg.seq_len, 1] {
        return Err(Error::shape("transformer_forward", shape, &[cfg.seq_len, 1]));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let w = tape.constant(&[1, cfg.seq_len, 1], window.data().to_vec())?;
    let y = model.forward(&mut tape, &bound, w, &mut ForwardCtx::eval())?;
    Tensor::new(&[cfg.horizon, 1], tape.value(y).to_vec())
}

/// Convenience wrapper around [`Transformer::init_parameters`].
pub fn init_parameters(cfg: &TransformerConfig, seed: u64) -> Result<ModelParameters> {
    Transformer::new(cfg.clone())?.init_parameters(seed)
}
