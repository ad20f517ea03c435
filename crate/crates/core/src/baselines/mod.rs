//! LSTM and GRU forecasters sharing the transformer's data pipeline and a
//! direct multi-horizon linear head.

mod gru;
mod lstm;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};

pub use gru::{gru_cell_step, GruLayer};
pub use lstm::{lstm_cell_step, LstmLayer};

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::tensor::{BoundParams, ModelParameters, Tape, Tensor, Var};
use crate::JobRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate blocks stacked in the input weight matrix.
    fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
        })
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::config(format!("unknown cell type `{other}`"))),
        }
    }
}

/// Recurrent baseline hyperparameters; defaults are hidden 512 and 8
/// stacked layers.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentConfig {
    pub hidden: usize,
    pub layers: usize,
    pub cell: CellKind,
    pub horizon: usize,
    pub seq_len: usize,
}

impl RecurrentConfig {
    pub fn new(cell: CellKind) -> Self {
        RecurrentConfig {
            hidden: 512,
            layers: 8,
            cell,
            horizon: 1,
            seq_len: 20,
        }
    }

    pub fn toy(cell: CellKind, hidden: usize, layers: usize, seq_len: usize, horizon: usize) -> Self {
        RecurrentConfig {
            hidden,
            layers,
            cell,
            horizon,
            seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.layers == 0 || self.horizon == 0 || self.seq_len == 0 {
            return Err(Error::config("hidden, layers, horizon and seq_len must all be ≥ 1"));
        }
        Ok(())
    }

    pub fn to_kv(&self, out: &mut KvMap) {
        out.set("cell", self.cell);
        out.set("hidden", self.hidden);
        out.set("rnn_layers", self.layers);
        out.set("horizon", self.horizon);
        out.set("seq_len", self.seq_len);
    }

    pub fn update_from_kv(&mut self, kv: &KvMap) -> Result<()> {
        kv.read_into("cell", &mut self.cell)?;
        kv.read_into("hidden", &mut self.hidden)?;
        kv.read_into("rnn_layers", &mut self.layers)?;
        kv.read_into("horizon", &mut self.horizon)?;
        kv.read_into("seq_len", &mut self.seq_len)?;
        Ok(())
    }
}

pub const HEAD_W: &str = "head.w";
pub const HEAD_B: &str = "head.b";

/// Stacked LSTM or GRU unrolled over the input window.
#[derive(Clone, Debug)]
pub struct Recurrent {
    cfg: RecurrentConfig,
}

enum Layer {
    Lstm(LstmLayer),
    Gru(GruLayer),
}

impl Recurrent {
    pub fn new(cfg: RecurrentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Recurrent { cfg })
    }

    pub fn config(&self) -> &RecurrentConfig {
        &self.cfg
    }

    /// Uniform(−1/√H, 1/√H) for every weight and bias.
    pub fn init_parameters(&self, seed: u64) -> Result<ModelParameters> {
        let c = &self.cfg;
        let h = c.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        let mut rng = JobRng::seed_from_u64(seed);
        let mut uniform = |shape: &[usize]| -> Result<Tensor> {
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect())
        };
        let mut p = ModelParameters::new();
        let g = c.cell.gates();
        for l in 0..c.layers {
            let input = if l == 0 { 1 } else { h };
            p.insert(format!("rnn.{l}.w_ih"), uniform(&[input, g * h])?)?;
            match c.cell {
                CellKind::Lstm => p.insert(format!("rnn.{l}.w_hh"), uniform(&[h, 4 * h])?)?,
                CellKind::Gru => {
                    p.insert(format!("rnn.{l}.w_hh"), uniform(&[h, 2 * h])?)?;
                    p.insert(format!("rnn.{l}.w_hn"), uniform(&[h, h])?)?;
                }
            }
            p.insert(format!("rnn.{l}.bias"), uniform(&[g * h])?)?;
        }
        p.insert(HEAD_W, uniform(&[h, c.horizon])?)?;
        p.insert(HEAD_B, uniform(&[c.horizon])?)?;
        Ok(p)
    }

    fn layers(&self, bound: &BoundParams<'_>) -> Result<Vec<Layer>> {
        (0..self.cfg.layers)
            .map(|l| {
                Ok(match self.cfg.cell {
                    CellKind::Lstm => Layer::Lstm(LstmLayer::bind(bound, l, self.cfg.hidden)?),
                    CellKind::Gru => Layer::Gru(GruLayer::bind(bound, l, self.cfg.hidden)?),
                })
            })
            .collect()
    }

    /// `[B, L, 1]` windows → `[B, m, 1]` forecasts from the final top-layer
    /// hidden state.
    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams<'_>, window: Var) -> Result<Var> {
        let c = &self.cfg;
        let shape = tape.shape(window).to_vec();
        if shape.len() != 3 || shape[1] != c.seq_len || shape[2] != 1 {
            return Err(Error::shape("recurrent input", &shape, &[0, c.seq_len, 1]));
        }
        let batch = shape[0];
        let layers = self.layers(bound)?;
        let series = tape.reshape(window, &[batch, c.seq_len])?;

        let zeros = || vec![0.0; batch * c.hidden];
        let mut h: Vec<Var> = (0..c.layers)
            .map(|_| tape.constant(&[batch, c.hidden], zeros()))
            .collect::<Result<_>>()?;
        let mut cell: Vec<Var> = match c.cell {
            CellKind::Lstm => (0..c.layers)
                .map(|_| tape.constant(&[batch, c.hidden], zeros()))
                .collect::<Result<_>>()?,
            CellKind::Gru => Vec::new(),
        };

        for t in 0..c.seq_len {
            let mut input = tape.slice_cols(series, t, 1)?;
            for (l, layer) in layers.iter().enumerate() {
                match layer {
                    Layer::Lstm(w) => {
                        let (hn, cn) = lstm_cell_step(tape, input, h[l], cell[l], w)?;
                        h[l] = hn;
                        cell[l] = cn;
                    }
                    Layer::Gru(w) => h[l] = gru_cell_step(tape, input, h[l], w)?,
                }
                input = h[l];
            }
        }

        let top = h[c.layers - 1];
        let y = tape.matmul(top, bound.var(HEAD_W)?)?;
        let y = tape.add_bias(y, bound.var(HEAD_B)?)?;
        tape.reshape(y, &[batch, c.horizon, 1])
    }
}

/// Single-window inference: `[L, 1]` → `[m, 1]`.
pub fn recurrent_forecast(window: &Tensor, params: &ModelParameters, cfg: &RecurrentConfig) -> Result<Tensor> {
    let model = Recurrent::new(cfg.clone())?;
    if window.shape() != [cfg.seq_len, 1] {
        return Err(Error::shape("recurrent_forecast", window.shape(), &[cfg.seq_len, 1]));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let w = tape.constant(&[1, cfg.seq_len, 1], window.data().to_vec())?;
    let y = model.forward(&mut tape, &bound, w)?;
    Tensor::new(&[cfg.horizon, 1], tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RecurrentConfig::new(CellKind::Gru);
        assert_eq!((c.hidden, c.layers), (512, 8));
        assert_eq!("LSTM".parse::<CellKind>().unwrap(), CellKind::Lstm);
        assert!("rnn".parse::<CellKind>().is_err());
    }

    #[test]
    fn layer_shapes() {
        for cell in [CellKind::Lstm, CellKind::Gru] {
            let m = Recurrent::new(RecurrentConfig::toy(cell, 5, 3, 4, 2)).unwrap();
            let p = m.init_parameters(0).unwrap();
            let g = cell.gates();
            assert_eq!(p.tensor("rnn.0.w_ih").unwrap().shape(), &[1, g * 5]);
            assert_eq!(p.tensor("rnn.2.w_ih").unwrap().shape(), &[5, g * 5]);
            assert_eq!(p.tensor(HEAD_W).unwrap().shape(), &[5, 2]);
        }
    }

    #[test]
    fn output_shape_is_horizon() {
        for cell in [CellKind::Lstm, CellKind::Gru] {
            let cfg = RecurrentConfig::toy(cell, 6, 2, 7, 5);
            let p = Recurrent::new(cfg.clone()).unwrap().init_parameters(1).unwrap();
            let w = Tensor::new(&[7, 1], vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.6, 0.7]).unwrap();
            let y = recurrent_forecast(&w, &p, &cfg).unwrap();
            assert_eq!(y.shape(), &[5, 1]);
            assert!(y.is_finite());
            let short = Tensor::new(&[6, 1], vec![0.0; 6]).unwrap();
            assert!(recurrent_forecast(&short, &p, &cfg).is_err());
        }
    }

    #[test]
    fn length_one_is_a_single_step() {
        let cfg = RecurrentConfig::toy(CellKind::Lstm, 4, 1, 1, 1);
        let model = Recurrent::new(cfg.clone()).unwrap();
        let p = model.init_parameters(9).unwrap();
        let window = Tensor::new(&[1, 1], vec![0.4]).unwrap();
        let y = recurrent_forecast(&window, &p, &cfg).unwrap();

        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let layer = LstmLayer::bind(&bound, 0, 4).unwrap();
        let x = tape.constant(&[1, 1], vec![0.4]).unwrap();
        let h0 = tape.constant(&[1, 4], vec![0.0; 4]).unwrap();
        let (h, _) = lstm_cell_step(&mut tape, x, h0, h0, &layer).unwrap();
        let out = tape.matmul(h, bound.var(HEAD_W).unwrap()).unwrap();
        let out = tape.add_bias(out, bound.var(HEAD_B).unwrap()).unwrap();
        assert_eq!(y.data(), tape.value(out));
    }
}
