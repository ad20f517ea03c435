use crate::error::Result;
use crate::tensor::{Tape, Var};

/// mean(½(y − ŷ)²) over batch and horizon.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    tape.mse_half(pred, target)
}

/// Narrows `[B, m, 1]` forecasts or targets to the last horizon step, `[B, 1]`.
pub fn final_step(tape: &mut Tape, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let (b, m) = (shape[0], shape[1]);
    let flat = tape.reshape(x, &[b, m])?;
    tape.slice_cols(flat, m - 1, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_check, ModelParameters, Tensor};

    #[test]
    fn hand_values() {
        let mut tape = Tape::new();
        let a = tape.constant(&[1, 1, 1], vec![0.0]).unwrap();
        let b = tape.constant(&[1, 1, 1], vec![2.0]).unwrap();
        let l = mse_loss(&mut tape, a, b).unwrap();
        assert_eq!(tape.scalar(l).unwrap(), 2.0);
        let l = mse_loss(&mut tape, b, b).unwrap();
        assert_eq!(tape.scalar(l).unwrap(), 0.0);
        let c = tape.constant(&[2, 1, 1], vec![0.0, 0.0]).unwrap();
        assert!(mse_loss(&mut tape, a, c).is_err());
    }

    #[test]
    fn gradient_is_residual_over_n() {
        let mut p = ModelParameters::new();
        p.insert(
            "pred",
            Tensor::new(&[2, 3, 1], vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.5]).unwrap(),
        )
        .unwrap();
        let target = vec![1.0, -0.5, 2.5, 0.0, 0.25, 1.0];
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let pred = bound.var("pred").unwrap();
        let t = tape.constant(&[2, 3, 1], target.clone()).unwrap();
        let loss = mse_loss(&mut tape, pred, t).unwrap();
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(pred).unwrap();
        for i in 0..6 {
            let expected = (p.tensor("pred").unwrap().data()[i] - target[i]) / 6.0;
            assert!((g[i] - expected).abs() < 1e-15);
        }

        let report = finite_diff_check(&mut p, 1e-5, |tape, bound| {
            let t = tape.constant(&[2, 3, 1], target.clone())?;
            mse_loss(tape, bound.var("pred")?, t)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn final_step_picks_last_column() {
        let mut tape = Tape::new();
        let x = tape.constant(&[2, 3, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = final_step(&mut tape, x).unwrap();
        assert_eq!(tape.shape(y), &[2, 1]);
        assert_eq!(tape.value(y), &[3.0, 6.0]);
    }
}
