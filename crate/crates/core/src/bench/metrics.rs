use crate::data::{Scaler, WindowedDataset};
use crate::error::{Error, Result};
use crate::forecaster::{Forecaster, ModelKind};
use crate::tensor::ModelParameters;

/// Targets with |y| at or below this are left out of MAPE.
pub const MAPE_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    /// Mean of |y − ŷ|/|y| over targets with |y| > [`MAPE_EPS`]; `None` when
    /// every target was excluded.
    pub mape: Option<f64>,
    pub mape_included: usize,
    pub mape_excluded: usize,
    /// `None` when the targets are constant (SS_tot = 0).
    pub r2: Option<f64>,
    pub n: usize,
}

/// MSE, MAE, MAPE and R² of `pred` against `actual`.
pub fn compute_metrics(actual: &[f64], pred: &[f64]) -> Result<Metrics> {
    if actual.len() != pred.len() {
        return Err(Error::shape("compute_metrics", &[actual.len()], &[pred.len()]));
    }
    if actual.is_empty() {
        return Err(Error::data("no samples to evaluate"));
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let (mut ss_res, mut abs, mut ss_tot, mut pct) = (0.0, 0.0, 0.0, 0.0);
    let mut included = 0usize;
    for (&y, &p) in actual.iter().zip(pred) {
        let e = y - p;
        ss_res += e * e;
        abs += e.abs();
        ss_tot += (y - mean) * (y - mean);
        if y.abs() > MAPE_EPS {
            pct += e.abs() / y.abs();
            included += 1;
        }
    }
    Ok(Metrics {
        mse: ss_res / n,
        mae: abs / n,
        mape: (included > 0).then(|| pct / included as f64),
        mape_included: included,
        mape_excluded: actual.len() - included,
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        n: actual.len(),
    })
}

/// Per-horizon-step targets and forecasts: `out[s] = (actual, predicted)`.
pub fn step_series(
    model: &Forecaster,
    params: &ModelParameters,
    test: &WindowedDataset,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if test.is_empty() {
        return Err(Error::data("test set has no windows"));
    }
    let preds = model.predict(params, &test.inputs())?;
    let m = test.horizon();
    let mut out = vec![(Vec::with_capacity(test.len()), Vec::with_capacity(test.len())); m];
    for (p, s) in preds.iter().zip(test.samples()) {
        for step in 0..m {
            out[step].0.push(s.y[step]);
            out[step].1.push(p[step]);
        }
    }
    Ok(out)
}

/// Metrics at the reporting step, the last of the `m` forecast steps.
pub fn evaluate(model: &Forecaster, params: &ModelParameters, test: &WindowedDataset) -> Result<Metrics> {
    let mut steps = step_series(model, params, test)?;
    let (y, p) = steps.pop().expect("horizon ≥ 1");
    compute_metrics(&y, &p)
}

/// Metrics for every forecast step.
pub fn evaluate_steps(model: &Forecaster, params: &ModelParameters, test: &WindowedDataset) -> Result<Vec<Metrics>> {
    step_series(model, params, test)?
        .iter()
        .map(|(y, p)| compute_metrics(y, p))
        .collect()
}

/// One benchmark cell's scores. `metrics` is in normalized units;
/// `physical` repeats them after mapping back through the scaler.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub seq_len: usize,
    pub horizon: usize,
    pub metrics: Metrics,
    pub physical: Option<Metrics>,
}

impl MetricsReport {
    pub fn n_test_samples(&self) -> usize {
        self.metrics.n
    }
}

/// Normalized and physical-unit metrics from reporting-step series.
pub fn report_from_series(
    model: ModelKind,
    seq_len: usize,
    horizon: usize,
    actual: &[f64],
    pred: &[f64],
    scaler: Option<&Scaler>,
) -> Result<MetricsReport> {
    let metrics = compute_metrics(actual, pred)?;
    let physical = scaler
        .map(|s| compute_metrics(&s.denormalize(actual), &s.denormalize(pred)))
        .transpose()?;
    Ok(MetricsReport {
        model,
        seq_len,
        horizon,
        metrics,
        physical,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [0.3, -0.2, 0.9, 0.1];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.mse, m.mae, m.mape, m.r2), (0.0, 0.0, Some(0.0), Some(1.0)));
    }

    #[test]
    fn mean_prediction_scores_zero() {
        let y = [1.0, 4.0, 2.5, 0.5];
        let mean = y.iter().sum::<f64>() / 4.0;
        let m = compute_metrics(&y, &[mean; 4]).unwrap();
        assert!(m.r2.unwrap().abs() < 1e-12);
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.r2.unwrap() - 0.5).abs() < 1e-15);
        assert!((m.mape.unwrap() - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let m = compute_metrics(&[2.0, 2.0], &[1.0, 3.0]).unwrap();
        assert_eq!(m.r2, None);
        let m = compute_metrics(&[0.0, 1.0, 0.0], &[0.5, 1.0, 0.0]).unwrap();
        assert_eq!((m.mape_included, m.mape_excluded), (1, 2));
        assert_eq!(m.mape, Some(0.0));
        assert_eq!(compute_metrics(&[0.0], &[1.0]).unwrap().mape, None);
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn constant_shift_only_moves_mape() {
        let y = [0.2, 0.5, -0.4, 0.9, 0.1];
        let p = [0.25, 0.4, -0.3, 0.7, 0.0];
        let a = compute_metrics(&y, &p).unwrap();
        let shift = |v: &[f64]| v.iter().map(|x| x + 10.0).collect::<Vec<_>>();
        let b = compute_metrics(&shift(&y), &shift(&p)).unwrap();
        assert!((a.mse - b.mse).abs() < 1e-12);
        assert!((a.mae - b.mae).abs() < 1e-12);
        assert!((a.r2.unwrap() - b.r2.unwrap()).abs() < 1e-12);
    }
}
