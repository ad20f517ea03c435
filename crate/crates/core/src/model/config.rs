use crate::attention::check_heads;
use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Transformer hyperparameters. Defaults follow the experimental setup:
/// d_model 512, 8 heads, 8 layers, dropout 0.1, univariate in and out.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    /// Blocks in each of the encoder and decoder stacks. The architecture
    /// description uses 6; the experiments use 8.
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout_p: f64,
    /// Dropout on attention weights; 0 keeps masked outputs exactly causal.
    pub attn_dropout_p: f64,
    pub input_features: usize,
    pub output_features: usize,
    pub horizon: usize,
    pub seq_len: usize,
    /// Reuse the input projection (transposed) as the output head.
    pub tie_embeddings: bool,
    pub eps_layernorm: f64,
    pub init_std: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 512,
            n_heads: 8,
            n_layers: 8,
            d_ff: 2048,
            dropout_p: 0.1,
            attn_dropout_p: 0.0,
            input_features: 1,
            output_features: 1,
            horizon: 1,
            seq_len: 20,
            tie_embeddings: true,
            eps_layernorm: 1e-5,
            init_std: 0.02,
        }
    }
}

impl TransformerConfig {
    /// A small configuration for tests and desk-scale runs.
    pub fn toy(d_model: usize, n_heads: usize, n_layers: usize, seq_len: usize, horizon: usize) -> Self {
        TransformerConfig {
            d_model,
            n_heads,
            n_layers,
            d_ff: 2 * d_model,
            dropout_p: 0.0,
            seq_len,
            horizon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_heads(self.d_model, self.n_heads)?;
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::config(format!("d_model {} must be even", self.d_model)));
        }
        if self.horizon == 0 || self.seq_len == 0 || self.d_ff == 0 {
            return Err(Error::config("horizon, seq_len and d_ff must be ≥ 1"));
        }
        if self.input_features != 1 || self.output_features != 1 {
            return Err(Error::config("only univariate input and output are supported"));
        }
        for (name, p) in [("dropout", self.dropout_p), ("attention dropout", self.attn_dropout_p)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::config(format!("{name} {p} outside [0, 1)")));
            }
        }
        if self.eps_layernorm <= 0.0 || self.init_std <= 0.0 {
            return Err(Error::config("eps_layernorm and init_std must be positive"));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn to_kv(&self, out: &mut KvMap) {
        out.set("d_model", self.d_model);
        out.set("n_heads", self.n_heads);
        out.set("n_layers", self.n_layers);
        out.set("d_ff", self.d_ff);
        out.set("dropout", self.dropout_p);
        out.set("attn_dropout", self.attn_dropout_p);
        out.set("input_features", self.input_features);
        out.set("output_features", self.output_features);
        out.set("horizon", self.horizon);
        out.set("seq_len", self.seq_len);
        out.set("tie_embeddings", self.tie_embeddings);
        out.set("eps_layernorm", self.eps_layernorm);
        out.set("init_std", self.init_std);
    }

    /// Reads any keys present in `kv`, keeping `self`'s values otherwise.
    pub fn update_from_kv(&mut self, kv: &KvMap) -> Result<()> {
        kv.read_into("d_model", &mut self.d_model)?;
        kv.read_into("n_heads", &mut self.n_heads)?;
        kv.read_into("n_layers", &mut self.n_layers)?;
        kv.read_into("d_ff", &mut self.d_ff)?;
        kv.read_into("dropout", &mut self.dropout_p)?;
        kv.read_into("attn_dropout", &mut self.attn_dropout_p)?;
        kv.read_into("input_features", &mut self.input_features)?;
        kv.read_into("output_features", &mut self.output_features)?;
        kv.read_into("horizon", &mut self.horizon)?;
        kv.read_into("seq_len", &mut self.seq_len)?;
        kv.read_into("tie_embeddings", &mut self.tie_embeddings)?;
        kv.read_into("eps_layernorm", &mut self.eps_layernorm)?;
        kv.read_into("init_std", &mut self.init_std)?;
        Ok(())
    }
}
