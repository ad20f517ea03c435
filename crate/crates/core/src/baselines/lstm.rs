use crate::error::Result;
use crate::tensor::{BoundParams, Tape, Var};

/// One LSTM layer. Gate blocks in `w_ih`, `w_hh` and `bias` are ordered
/// input, forget, candidate, output.
#[derive(Clone, Copy, Debug)]
pub struct LstmLayer {
    pub w_ih: Var,
    pub w_hh: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl LstmLayer {
    pub fn bind(bound: &BoundParams<'_>, layer: usize, hidden: usize) -> Result<Self> {
        Ok(LstmLayer {
            w_ih: bound.var(&format!("rnn.{layer}.w_ih"))?,
            w_hh: bound.var(&format!("rnn.{layer}.w_hh"))?,
            bias: bound.var(&format!("rnn.{layer}.bias"))?,
            hidden,
        })
    }
}

/// i, f, o = σ(·); g = tanh(·); c = f⊙c_prev + i⊙g; h = o⊙tanh(c).
pub fn lstm_cell_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, w: &LstmLayer) -> Result<(Var, Var)> {
    let hd = w.hidden;
    let a = tape.matmul(x, w.w_ih)?;
    let b = tape.matmul(h_prev, w.w_hh)?;
    let pre = tape.add(a, b)?;
    let pre = tape.add_bias(pre, w.bias)?;

    let i = tape.slice_cols(pre, 0, hd)?;
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(pre, hd, hd)?;
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(pre, 2 * hd, hd)?;
    let g = tape.tanh(g);
    let o = tape.slice_cols(pre, 3 * hd, hd)?;
    let o = tape.sigmoid(o);

    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(tape: &mut Tape, input: usize, hidden: usize, bias: Vec<f64>) -> LstmLayer {
        LstmLayer {
            w_ih: tape
                .variable(&[input, 4 * hidden], vec![0.0; input * 4 * hidden])
                .unwrap(),
            w_hh: tape
                .variable(&[hidden, 4 * hidden], vec![0.0; hidden * 4 * hidden])
                .unwrap(),
            bias: tape.variable(&[4 * hidden], bias).unwrap(),
            hidden,
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let mut t = Tape::new();
        let w = layer(&mut t, 1, 3, vec![0.0; 12]);
        let x = t.constant(&[2, 1], vec![0.7, -0.3]).unwrap();
        let z = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
        let (h, c) = lstm_cell_step(&mut t, x, z, z, &w).unwrap();
        assert!(t.value(h).iter().all(|&v| v == 0.0));
        assert!(t.value(c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell() {
        let hd = 2;
        let mut bias = vec![0.0; 4 * hd];
        bias[hd..2 * hd].fill(20.0);
        let mut t = Tape::new();
        let w = layer(&mut t, 1, hd, bias);
        let x = t.constant(&[1, 1], vec![0.5]).unwrap();
        let h0 = t.constant(&[1, hd], vec![0.1, -0.2]).unwrap();
        let c0 = t.constant(&[1, hd], vec![0.8, -1.3]).unwrap();
        let (_, c) = lstm_cell_step(&mut t, x, h0, c0, &w).unwrap();
        // σ(20) = 1 − 2.06e-9 and the candidate tanh(0) is 0
        for (a, b) in t.value(c).iter().zip([0.8, -1.3]) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
