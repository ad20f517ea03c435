use crate::error::Result;
use crate::tensor::{BoundParams, Tape, Var};

/// One GRU layer. `w_ih` and `bias` hold the update, reset and candidate
/// blocks; `w_hh` holds the recurrent update and reset blocks, and `w_hn`
/// the recurrent candidate weights applied after the reset gate.
#[derive(Clone, Copy, Debug)]
pub struct GruLayer {
    pub w_ih: Var,
    pub w_hh: Var,
    pub w_hn: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl GruLayer {
    pub fn bind(bound: &BoundParams<'_>, layer: usize, hidden: usize) -> Result<Self> {
        Ok(GruLayer {
            w_ih: bound.var(&format!("rnn.{layer}.w_ih"))?,
            w_hh: bound.var(&format!("rnn.{layer}.w_hh"))?,
            w_hn: bound.var(&format!("rnn.{layer}.w_hn"))?,
            bias: bound.var(&format!("rnn.{layer}.bias"))?,
            hidden,
        })
    }
}

/// z, r = σ(·); h̃ = tanh(W x + U(r⊙h_prev) + b); h = (1−z)⊙h_prev + z⊙h̃.
///
/// Evaluated as h_prev + z⊙(h̃ − h_prev) so that z = 0 returns h_prev exactly.
pub fn gru_cell_step(tape: &mut Tape, x: Var, h_prev: Var, w: &GruLayer) -> Result<Var> {
    let hd = w.hidden;
    let xw = tape.matmul(x, w.w_ih)?;
    let xw = tape.add_bias(xw, w.bias)?;
    let hw = tape.matmul(h_prev, w.w_hh)?;

    let xz = tape.slice_cols(xw, 0, hd)?;
    let hz = tape.slice_cols(hw, 0, hd)?;
    let z = tape.add(xz, hz)?;
    let z = tape.sigmoid(z);

    let xr = tape.slice_cols(xw, hd, hd)?;
    let hr = tape.slice_cols(hw, hd, hd)?;
    let r = tape.add(xr, hr)?;
    let r = tape.sigmoid(r);

    let reset = tape.mul(r, h_prev)?;
    let hn = tape.matmul(reset, w.w_hn)?;
    let xn = tape.slice_cols(xw, 2 * hd, hd)?;
    let n = tape.add(xn, hn)?;
    let n = tape.tanh(n);

    let delta = tape.sub(n, h_prev)?;
    let step = tape.mul(z, delta)?;
    tape.add(h_prev, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn layer(tape: &mut Tape, input: usize, hd: usize, fill: impl Fn() -> f64, bias: Vec<f64>) -> GruLayer {
        let v = |n: usize| (0..n).map(|_| fill()).collect::<Vec<_>>();
        GruLayer {
            w_ih: tape.variable(&[input, 3 * hd], v(input * 3 * hd)).unwrap(),
            w_hh: tape.variable(&[hd, 2 * hd], v(hd * 2 * hd)).unwrap(),
            w_hn: tape.variable(&[hd, hd], v(hd * hd)).unwrap(),
            bias: tape.variable(&[3 * hd], bias).unwrap(),
            hidden: hd,
        }
    }

    #[test]
    fn zero_weights_zero_state() {
        let mut t = Tape::new();
        let w = layer(&mut t, 1, 3, || 0.0, vec![0.0; 9]);
        let x = t.constant(&[1, 1], vec![0.9]).unwrap();
        let h0 = t.constant(&[1, 3], vec![0.0; 3]).unwrap();
        let h = gru_cell_step(&mut t, x, h0, &w).unwrap();
        assert!(t.value(h).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_update_gate_keeps_state() {
        let hd = 4;
        let mut rng = crate::JobRng::seed_from_u64(5);
        let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cell = std::cell::Cell::new(0);
        let next = || {
            let i = cell.get();
            cell.set(i + 1);
            vals[i % vals.len()]
        };
        let mut bias = vec![0.0; 3 * hd];
        bias[..hd].fill(-40.0);
        let mut t = Tape::new();
        let w = layer(&mut t, 1, hd, next, bias);
        let x = t.constant(&[1, 1], vec![0.3]).unwrap();
        let prev = vec![0.5, -0.25, 0.75, 0.1];
        let h0 = t.constant(&[1, hd], prev.clone()).unwrap();
        let h = gru_cell_step(&mut t, x, h0, &w).unwrap();
        for (a, b) in t.value(h).iter().zip(&prev) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn state_stays_in_convex_bound() {
        let hd = 3;
        let mut rng = crate::JobRng::seed_from_u64(11);
        for _ in 0..50 {
            let mut t = Tape::new();
            let vals: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let cell = std::cell::Cell::new(0);
            let next = || {
                let i = cell.get();
                cell.set(i + 1);
                vals[i % vals.len()]
            };
            let bias: Vec<f64> = (0..3 * hd).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let w = layer(&mut t, 1, hd, next, bias);
            let prev: Vec<f64> = (0..hd).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x = t.constant(&[1, 1], vec![rng.gen_range(-1.0..1.0)]).unwrap();
            let h0 = t.constant(&[1, hd], prev.clone()).unwrap();
            let h = gru_cell_step(&mut t, x, h0, &w).unwrap();
            let limit = prev.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            assert!(t.value(h).iter().all(|v| v.abs() <= limit + 1e-12));
        }
    }
}
