//! Model checkpoints: a `key = value` text header describing the model,
//! scaler and parameter layout, then every parameter as little-endian f64.
//!
//! ```text
//! ewpf-checkpoint 1
//! d_model = 32
//! ...
//! param.0000.name = embed.proj
//! param.0000.offset = 0
//! param.0000.shape = 1,32
//! ...
//! ---
//! <raw bytes>
//! ```

use std::path::Path;

use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::forecaster::ModelConfig;
use crate::kv::KvMap;
use crate::tensor::{ModelParameters, Tensor};

const MAGIC: &str = "ewpf-checkpoint 1\n";
const END: &str = "---\n";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Scaler fitted to the training split, needed to forecast in watts.
    pub scaler: Option<Scaler>,
    pub params: ModelParameters,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut kv = KvMap::new();
        self.model.to_kv(&mut kv);
        if let Some(s) = self.scaler {
            kv.set("scaler.min", s.min);
            kv.set("scaler.max", s.max);
        }
        kv.set("params", self.params.len());
        let mut offset = 0usize;
        for (i, p) in self.params.iter().enumerate() {
            let shape: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
            kv.set(&format!("param.{i:04}.name"), &p.name);
            kv.set(&format!("param.{i:04}.shape"), shape.join(","));
            kv.set(&format!("param.{i:04}.offset"), offset);
            offset += p.tensor.len() * 8;
        }

        let mut out = Vec::with_capacity(offset + 4096);
        out.extend_from_slice(MAGIC.as_bytes());
        out.extend_from_slice(kv.to_text().as_bytes());
        out.extend_from_slice(END.as_bytes());
        for p in self.params.iter() {
            for v in p.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", origin.display()));
        let body = bytes
            .strip_prefix(MAGIC.as_bytes())
            .ok_or_else(|| bad("not a checkpoint file (missing header line)".into()))?;
        let split =
            find(body, format!("\n{END}").as_bytes()).ok_or_else(|| bad("header terminator not found".into()))?;
        let header = std::str::from_utf8(&body[..split + 1]).map_err(|_| bad("header is not valid UTF-8".into()))?;
        let data = &body[split + 1 + END.len()..];
        let kv = KvMap::parse(header, origin)?;

        let model = ModelConfig::from_kv(&kv)?;
        let scaler = match (
            kv.parse_value::<f64>("scaler.min")?,
            kv.parse_value::<f64>("scaler.max")?,
        ) {
            (Some(min), Some(max)) => Some(Scaler::new(min, max)?),
            (None, None) => None,
            _ => return Err(bad("scaler needs both min and max".into())),
        };

        let count: usize = kv.require("params")?;
        let mut params = ModelParameters::new();
        let mut expected_offset = 0usize;
        for i in 0..count {
            let name: String = kv.require(&format!("param.{i:04}.name"))?;
            let shape: Vec<usize> = kv
                .list(&format!("param.{i:04}.shape"))?
                .ok_or_else(|| bad(format!("parameter {i} has no shape")))?;
            let offset: usize = kv.require(&format!("param.{i:04}.offset"))?;
            if offset != expected_offset {
                return Err(bad(format!(
                    "parameter {name} at offset {offset}, expected {expected_offset}"
                )));
            }
            let n: usize = shape.iter().product();
            let end = offset + n * 8;
            let raw = data
                .get(offset..end)
                .ok_or_else(|| bad(format!("data for {name} is truncated")))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.insert(name, Tensor::new(&shape, values)?)?;
            expected_offset = end;
        }
        if expected_offset != data.len() {
            return Err(bad(format!(
                "{} trailing bytes after the last parameter",
                data.len() as i64 - expected_offset as i64
            )));
        }
        Ok(Checkpoint { model, scaler, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::{CellKind, RecurrentConfig};
    use crate::forecaster::Forecaster;
    use crate::model::TransformerConfig;

    fn checkpoint(cfg: ModelConfig, seed: u64) -> Checkpoint {
        let params = Forecaster::new(&cfg).unwrap().init_parameters(seed).unwrap();
        Checkpoint {
            model: cfg,
            scaler: Some(Scaler::new(0.1, 1234.5).unwrap()),
            params,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let configs = [
            ModelConfig::Transformer(TransformerConfig::toy(8, 2, 2, 5, 3)),
            ModelConfig::Recurrent(RecurrentConfig::toy(CellKind::Gru, 4, 2, 5, 1)),
            ModelConfig::Recurrent(RecurrentConfig::toy(CellKind::Lstm, 3, 1, 10, 5)),
        ];
        for cfg in configs {
            let mut ck = checkpoint(cfg, 3);
            // one ulp above 1.0 survives only a bit-exact encoding
            ck.params.iter_mut().next().unwrap().tensor.data_mut()[0] = f64::from_bits(0x3ff0_0000_0000_0001);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
            assert_eq!(back, ck);
            for (a, b) in back.params.iter().zip(ck.params.iter()) {
                let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&a.tensor), bits(&b.tensor));
            }
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn file_roundtrip() {
        let ck = checkpoint(ModelConfig::Transformer(TransformerConfig::toy(4, 1, 1, 3, 1)), 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        ck.save(&p).unwrap();
        assert_eq!(Checkpoint::load(&p).unwrap(), ck);
    }

    #[test]
    fn corrupt_input_rejected() {
        let ck = checkpoint(
            ModelConfig::Recurrent(RecurrentConfig::toy(CellKind::Lstm, 2, 1, 3, 1)),
            0,
        );
        let bytes = ck.to_bytes();
        let origin = Path::new("mem");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3], origin).is_err());
        assert!(Checkpoint::from_bytes(b"hello", origin).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, origin).is_err());
    }
}
