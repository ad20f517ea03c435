//! Shared fixtures for the criterion benchmarks in `benches/`.

use ewpf_core::data::{make_windows, synthesize_series, Profile, WindowedDataset};
use ewpf_core::Result;

/// Exactly `batch` normalized sine windows, so one training epoch is one
/// optimizer step.
pub fn one_batch(batch: usize, seq_len: usize, horizon: usize) -> Result<WindowedDataset> {
    let n = batch + seq_len + horizon - 1;
    let series = synthesize_series(n, 0, Profile::Sine)?;
    let values: Vec<f64> = series.values().iter().map(|v| v - 1.0).collect();
    make_windows(&values, seq_len, horizon, 1)
}
