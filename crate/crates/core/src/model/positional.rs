use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Precomputed sinusoidal position table, `max_len × d_model`.
///
/// Column 2i holds sin(pos / 10000^(2i/d_model)) and column 2i+1 the
/// matching cosine.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalEncoding {
    table: Tensor,
}

pub fn positional_encoding(max_len: usize, d_model: usize) -> Result<PositionalEncoding> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::config(format!(
            "positional encoding needs an even d_model, got {d_model}"
        )));
    }
    if max_len == 0 {
        return Err(Error::config("positional encoding needs max_len ≥ 1"));
    }
    let mut data = vec![0.0; max_len * d_model];
    for pos in 0..max_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(PositionalEncoding {
        table: Tensor::new(&[max_len, d_model], data)?,
    })
}

impl PositionalEncoding {
    pub fn max_len(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn d_model(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn table(&self) -> &Tensor {
        &self.table
    }

    /// Rows `0..len`, flattened.
    pub fn rows(&self, len: usize) -> Result<&[f64]> {
        if len > self.max_len() {
            return Err(Error::contract(format!(
                "sequence of length {len} exceeds positional table of {}",
                self.max_len()
            )));
        }
        Ok(&self.table.data()[..len * self.d_model()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates_zero_one() {
        let pe = positional_encoding(4, 8).unwrap();
        let row = pe.table().row(0);
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, if j % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn first_frequency_is_unit() {
        let pe = positional_encoding(4, 8).unwrap();
        assert!((pe.table().at(1, 0) - 0.841_470_984_8).abs() < 1e-10);
        assert!((pe.table().at(1, 1) - 1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn entries_bounded() {
        let pe = positional_encoding(200, 16).unwrap();
        assert!(pe.table().data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(positional_encoding(4, 7), Err(Error::Config(_))));
        let pe = positional_encoding(4, 8).unwrap();
        assert!(pe.rows(5).is_err());
        assert_eq!(pe.rows(2).unwrap().len(), 16);
    }
}
