use ewpf_core::Tape;
use proptest::collection::vec;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-5.0..5.0f64, rows * cols)
}

fn softmax(shape: &[usize], x: Vec<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let v = tape.constant(shape, x).unwrap();
    let y = tape.softmax_lastdim(v);
    tape.value(y).to_vec()
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions((rows, cols, x) in (1..6usize, 1..9usize)
        .prop_flat_map(|(r, c)| (Just(r), Just(c), matrix(r, c))))
    {
        let y = softmax(&[rows, cols], x);
        for row in y.chunks(cols) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_ignores_row_shift(x in matrix(3, 7), shift in -50.0..50.0f64) {
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = softmax(&[3, 7], x);
        let b = softmax(&[3, 7], shifted);
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_transpose_identity(a in matrix(4, 3), b in matrix(3, 5)) {
        // (AB)^T = B^T A^T
        let mut tape = Tape::new();
        let av = tape.constant(&[4, 3], a).unwrap();
        let bv = tape.constant(&[3, 5], b).unwrap();
        let ab = tape.matmul(av, bv).unwrap();
        let lhs = tape.transpose(ab).unwrap();
        let bt = tape.transpose(bv).unwrap();
        let at = tape.transpose(av).unwrap();
        let rhs = tape.matmul(bt, at).unwrap();
        prop_assert_eq!(tape.shape(lhs), &[5, 4]);
        for (x, y) in tape.value(lhs).iter().zip(tape.value(rhs)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
