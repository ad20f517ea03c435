use crate::error::{Error, Result};

/// Min-max scaling onto [−1, 1]: x' = 2(x − min)/(max − min) − 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::data(format!(
                "min-max scaling needs max > min, got min {min}, max {max}"
            )));
        }
        Ok(Scaler { min, max })
    }

    pub fn normalize_value(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    pub fn denormalize_value(&self, y: f64) -> f64 {
        (y + 1.0) * 0.5 * (self.max - self.min) + self.min
    }

    pub fn normalize(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.normalize_value(x)).collect()
    }

    pub fn denormalize(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.denormalize_value(y)).collect()
    }
}

/// Fits a scaler to the extrema of `train`. Constant input is an error.
pub fn fit_minmax(train: &[f64]) -> Result<Scaler> {
    if train.is_empty() {
        return Err(Error::data("cannot fit a scaler to an empty series"));
    }
    let min = train.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Scaler::new(min, max)
}
