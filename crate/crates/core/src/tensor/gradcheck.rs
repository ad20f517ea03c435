//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;

use super::{BoundParams, ModelParameters, Tape, Var};
use crate::error::{Error, Result};
use crate::JobRng;

/// Default number of parameter entries probed per check.
pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// max |analytic − numeric| / (|analytic| + |numeric| + 1e-12)
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

/// Checks `f` against central differences on up to [`DEFAULT_SAMPLES`]
/// entries (all entries when there are fewer). `f` must be deterministic.
pub fn finite_diff_check<F>(params: &mut ModelParameters, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BoundParams<'_>) -> Result<Var>,
{
    finite_diff_check_with(params, eps, DEFAULT_SAMPLES, 0, f)
}

/// As [`finite_diff_check`] with an explicit sample count and sampling seed.
/// `samples >= numel` checks every entry.
pub fn finite_diff_check_with<F>(
    params: &mut ModelParameters,
    eps: f64,
    samples: usize,
    seed: u64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &BoundParams<'_>) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::config(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let total = params.numel();
    if total == 0 {
        return Err(Error::contract("no parameters to check"));
    }

    let analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        let vars = bound.into_vars();
        let grads = tape.backward(loss)?;
        vars.iter()
            .zip(params.iter())
            .map(|(v, p)| grads.get(*v).map_or_else(|| vec![0.0; p.tensor.len()], <[f64]>::to_vec))
            .collect()
    };

    // Flat index → (parameter, entry)
    let offsets: Vec<usize> = params
        .iter()
        .scan(0, |acc, p| {
            let start = *acc;
            *acc += p.tensor.len();
            Some(start)
        })
        .collect();
    let picks: Vec<usize> = if samples >= total {
        (0..total).collect()
    } else {
        let mut rng = JobRng::seed_from_u64(seed);
        let mut v = sample(&mut rng, total, samples).into_vec();
        v.sort_unstable();
        v
    };

    let eval = |params: &ModelParameters| -> Result<f64> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let loss = f(&mut tape, &bound)?;
        tape.scalar(loss)
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for flat in picks {
        let pi = offsets.partition_point(|&o| o <= flat) - 1;
        let entry = flat - offsets[pi];
        let name = params.iter().nth(pi).unwrap().name.clone();

        let original = params.tensor(&name)?.data()[entry];
        set_entry(params, &name, entry, original + eps);
        let plus = eval(params)?;
        set_entry(params, &name, entry, original - eps);
        let minus = eval(params)?;
        set_entry(params, &name, entry, original);

        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[pi][entry];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((name, entry));
        }
        report.checked += 1;
    }
    Ok(report)
}

fn set_entry(params: &mut ModelParameters, name: &str, entry: usize, value: f64) {
    params.get_mut(name).unwrap().tensor.data_mut()[entry] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn quadratic_gradient_is_exact() {
        let mut p = ModelParameters::new();
        p.insert("w", Tensor::new(&[1], vec![3.0]).unwrap()).unwrap();
        let report = finite_diff_check(&mut p, 1e-5, |tape, b| {
            let w = b.var("w")?;
            tape.mul(w, w)
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 1);
        // parameters restored
        assert_eq!(p.tensor("w").unwrap().data(), &[3.0]);
    }

    #[test]
    fn linear_gradient_is_machine_exact() {
        let mut p = ModelParameters::new();
        p.insert("w", Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
        let report = finite_diff_check(&mut p, 1e-4, |tape, b| {
            let w = b.var("w")?;
            let s = tape.scale(w, 1.5);
            Ok(tape.sum(s))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let mut p = ModelParameters::new();
        p.insert("w", Tensor::new(&[1], vec![3.0]).unwrap()).unwrap();
        let r = finite_diff_check(&mut p, 1e-2, |tape, b| Ok(tape.sum(b.var("w")?)));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // ReLU at its kink: subgradient 0 against a central difference of 0.5.
        let mut p = ModelParameters::new();
        p.insert("w", Tensor::new(&[1], vec![0.0]).unwrap()).unwrap();
        let report = finite_diff_check(&mut p, 1e-5, |tape, b| {
            let w = b.var("w")?;
            let r = tape.relu(w);
            Ok(tape.sum(r))
        })
        .unwrap();
        assert!((report.max_rel_error - 1.0).abs() < 1e-9);
    }
}
