//! Series ingestion, scaling, chronological splitting and rolling windows.

mod scaler;
mod series;
mod synth;
mod windows;

pub use scaler::{fit_minmax, Scaler};
pub use series::{load_csv, TimeSeries, TIMESTAMP_FORMAT};
pub use synth::{synthesize_series, Profile};
pub use windows::{make_windows, window_count, Sample, WindowedDataset};

use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRAC: f64 = 0.70;

/// Chronological split: train is the first ⌊frac·T⌋ points.
pub fn split_train_test(ts: &TimeSeries, train_frac: f64) -> Result<(TimeSeries, TimeSeries)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_frac}"
        )));
    }
    let cut = (train_frac * ts.len() as f64).floor() as usize;
    Ok((ts.slice(0..cut), ts.slice(cut..ts.len())))
}

/// Normalized train and test windows for one (L, m) cell, with the scaler
/// fitted to the training split alone.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub scaler: Scaler,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    /// Length of the training split; test origins are offset by this much in
    /// the full series.
    pub train_len: usize,
}

pub fn prepare(ts: &TimeSeries, seq_len: usize, horizon: usize, train_frac: f64) -> Result<PreparedData> {
    let (train, test) = split_train_test(ts, train_frac)?;
    let need = seq_len + horizon;
    if train.len() < need || test.len() < need {
        return Err(Error::data(format!(
            "split of {} points gives {}/{}, each side needs at least seq_len + horizon = {need}",
            ts.len(),
            train.len(),
            test.len()
        )));
    }
    let scaler = fit_minmax(train.values())?;
    Ok(PreparedData {
        scaler,
        train: make_windows(&scaler.normalize(train.values()), seq_len, horizon, 1)?,
        test: make_windows(&scaler.normalize(test.values()), seq_len, horizon, 1)?,
        train_len: train.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_chronological() {
        let ts = synthesize_series(10, 0, Profile::Sine).unwrap();
        let (a, b) = split_train_test(&ts, 0.7).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert_eq!(a.values(), &ts.values()[..7]);
        assert!(split_train_test(&ts, 1.0).is_err());
        assert!(split_train_test(&ts, 0.0).is_err());
    }

    #[test]
    fn full_dataset_split() {
        let ts = synthesize_series(61_500, 1, Profile::DiurnalNoise).unwrap();
        let (a, b) = split_train_test(&ts, DEFAULT_TRAIN_FRAC).unwrap();
        assert_eq!((a.len(), b.len()), (43_050, 18_450));
    }

    #[test]
    fn scaler_uses_train_only() {
        let ts = synthesize_series(400, 3, Profile::DiurnalNoise).unwrap();
        let p = prepare(&ts, 20, 5, 0.7).unwrap();
        let train = &ts.values()[..p.train_len];
        let min = train.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!((p.scaler.min, p.scaler.max), (min, max));
        assert_eq!(p.train.len(), 280 - 25 + 1);
        assert_eq!(p.test.len(), 120 - 25 + 1);
    }

    #[test]
    fn short_split_rejected() {
        let ts = synthesize_series(40, 0, Profile::Sine).unwrap();
        assert!(prepare(&ts, 10, 5, 0.7).is_err());
        assert!(prepare(&ts, 5, 1, 0.7).is_ok());
    }
}
