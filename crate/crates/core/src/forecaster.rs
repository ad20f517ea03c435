//! One interface over the three model families.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{CellKind, Recurrent, RecurrentConfig};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::model::{Transformer, TransformerConfig};
use crate::tensor::{BoundParams, ForwardCtx, ModelParameters, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Lstm,
    Gru,
    Transformer,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lstm, ModelKind::Gru, ModelKind::Transformer];

    /// Display name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Lstm => "LSTM",
            ModelKind::Gru => "GRU",
            ModelKind::Transformer => "Transformer",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Gru => "gru",
            ModelKind::Transformer => "transformer",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "transformer" => Ok(ModelKind::Transformer),
            "lstm" => Ok(ModelKind::Lstm),
            "gru" => Ok(ModelKind::Gru),
            other => Err(Error::config(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelConfig {
    Transformer(TransformerConfig),
    Recurrent(RecurrentConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Transformer(_) => ModelKind::Transformer,
            ModelConfig::Recurrent(c) => match c.cell {
                CellKind::Lstm => ModelKind::Lstm,
                CellKind::Gru => ModelKind::Gru,
            },
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            ModelConfig::Transformer(c) => c.seq_len,
            ModelConfig::Recurrent(c) => c.seq_len,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelConfig::Transformer(c) => c.horizon,
            ModelConfig::Recurrent(c) => c.horizon,
        }
    }

    pub fn to_kv(&self, out: &mut KvMap) {
        out.set("model", self.kind());
        match self {
            ModelConfig::Transformer(c) => c.to_kv(out),
            ModelConfig::Recurrent(c) => c.to_kv(out),
        }
    }

    /// Rebuilds a config from `model = ...` plus the family's keys; absent
    /// keys take the family defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let kind: ModelKind = kv.require("model")?;
        Self::defaults_for(kind).with_kv(kv)
    }

    pub fn with_kv(mut self, kv: &KvMap) -> Result<Self> {
        match &mut self {
            ModelConfig::Transformer(c) => c.update_from_kv(kv)?,
            ModelConfig::Recurrent(c) => c.update_from_kv(kv)?,
        }
        Ok(self)
    }

    pub fn defaults_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Transformer => ModelConfig::Transformer(TransformerConfig::default()),
            ModelKind::Lstm => ModelConfig::Recurrent(RecurrentConfig::new(CellKind::Lstm)),
            ModelKind::Gru => ModelConfig::Recurrent(RecurrentConfig::new(CellKind::Gru)),
        }
    }

    pub fn set_shape(&mut self, seq_len: usize, horizon: usize) {
        match self {
            ModelConfig::Transformer(c) => {
                c.seq_len = seq_len;
                c.horizon = horizon;
            }
            ModelConfig::Recurrent(c) => {
                c.seq_len = seq_len;
                c.horizon = horizon;
            }
        }
    }
}

/// A constructed model of any family.
#[derive(Clone, Debug)]
pub enum Forecaster {
    Transformer(Transformer),
    Recurrent(Recurrent),
}

impl Forecaster {
    pub fn new(cfg: &ModelConfig) -> Result<Self> {
        Ok(match cfg {
            ModelConfig::Transformer(c) => Forecaster::Transformer(Transformer::new(c.clone())?),
            ModelConfig::Recurrent(c) => Forecaster::Recurrent(Recurrent::new(c.clone())?),
        })
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Forecaster::Transformer(m) => ModelConfig::Transformer(m.config().clone()),
            Forecaster::Recurrent(m) => ModelConfig::Recurrent(m.config().clone()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.config().kind()
    }

    pub fn seq_len(&self) -> usize {
        match self {
            Forecaster::Transformer(m) => m.config().seq_len,
            Forecaster::Recurrent(m) => m.config().seq_len,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Forecaster::Transformer(m) => m.config().horizon,
            Forecaster::Recurrent(m) => m.config().horizon,
        }
    }

    pub fn init_parameters(&self, seed: u64) -> Result<ModelParameters> {
        match self {
            Forecaster::Transformer(m) => m.init_parameters(seed),
            Forecaster::Recurrent(m) => m.init_parameters(seed),
        }
    }

    /// `[B, L, 1]` → `[B, m, 1]`. Recurrent models have no dropout, so the
    /// context only matters for the transformer.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &BoundParams<'_>,
        window: Var,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<Var> {
        match self {
            Forecaster::Transformer(m) => m.forward(tape, bound, window, ctx),
            Forecaster::Recurrent(m) => m.forward(tape, bound, window),
        }
    }

    /// Evaluation-mode forecasts for a list of flat windows, `m` values each.
    pub fn predict(&self, params: &ModelParameters, windows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        const CHUNK: usize = 256;
        let (l, m) = (self.seq_len(), self.horizon());
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(CHUNK) {
            if let Some(bad) = chunk.iter().find(|w| w.len() != l) {
                return Err(Error::shape("predict", &[bad.len()], &[l]));
            }
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let x = tape.constant(&[chunk.len(), l, 1], chunk.concat())?;
            let y = self.forward(&mut tape, &bound, x, &mut ForwardCtx::eval())?;
            out.extend(tape.value(y).chunks_exact(m).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_parsing() {
        for k in ModelKind::ALL {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
        assert!("arima".parse::<ModelKind>().is_err());
    }

    #[test]
    fn config_kv_roundtrip() {
        for k in ModelKind::ALL {
            let mut cfg = ModelConfig::defaults_for(k);
            cfg.set_shape(10, 5);
            let mut kv = KvMap::new();
            cfg.to_kv(&mut kv);
            assert_eq!(ModelConfig::from_kv(&kv).unwrap(), cfg);
        }
    }
}
