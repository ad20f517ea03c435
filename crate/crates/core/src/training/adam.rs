use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::tensor::ModelParameters;

/// Optimizer and loop settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eps_adam: f64,
    pub seed: u64,
    /// Train on the last horizon step only instead of all `m` steps.
    pub final_step_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            epochs: 50,
            eps_adam: 1e-8,
            seed: 0,
            final_step_only: false,
        }
    }
}

impl TrainConfig {
    /// β₁ = 0, β₂ = 0.5.
    pub fn with_paper_betas(mut self) -> Self {
        self.beta1 = 0.0;
        self.beta2 = 0.5;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be ≥ 1"));
        }
        if self.eps_adam.is_nan() || self.eps_adam <= 0.0 {
            return Err(Error::config("eps_adam must be positive"));
        }
        Ok(())
    }

    pub fn to_kv(&self, out: &mut KvMap) {
        out.set("lr", self.lr);
        out.set("beta1", self.beta1);
        out.set("beta2", self.beta2);
        out.set("batch_size", self.batch_size);
        out.set("epochs", self.epochs);
        out.set("eps_adam", self.eps_adam);
        out.set("seed", self.seed);
        out.set("final_step_only", self.final_step_only);
    }

    pub fn update_from_kv(&mut self, kv: &KvMap) -> Result<()> {
        kv.read_into("lr", &mut self.lr)?;
        kv.read_into("beta1", &mut self.beta1)?;
        kv.read_into("beta2", &mut self.beta2)?;
        kv.read_into("batch_size", &mut self.batch_size)?;
        kv.read_into("epochs", &mut self.epochs)?;
        kv.read_into("eps_adam", &mut self.eps_adam)?;
        kv.read_into("seed", &mut self.seed)?;
        kv.read_into("final_step_only", &mut self.final_step_only)?;
        Ok(())
    }
}

/// First and second moment buffers, one per parameter in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParameters) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.v[i]
    }
}

/// One bias-corrected Adam update from the gradients stored on `params`.
/// Parameters without a gradient buffer are treated as having zero gradient.
pub fn adam_step(params: &mut ModelParameters, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::contract("optimizer state does not match the parameter set"));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let (theta, grad) = p.tensor.data_and_grad();
        if theta.len() != m.len() {
            return Err(Error::contract(format!("optimizer state shape differs for {}", p.name)));
        }
        let Some(g) = grad else {
            m.iter_mut().for_each(|x| *x *= cfg.beta1);
            v.iter_mut().for_each(|x| *x *= cfg.beta2);
            continue;
        };
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};

    fn scalar_params(theta: f64) -> ModelParameters {
        let mut p = ModelParameters::new();
        p.insert("theta", Tensor::scalar(theta)).unwrap();
        p
    }

    fn set_grad(p: &mut ModelParameters, g: f64) {
        p.zero_grad();
        p.get_mut("theta").unwrap().tensor.accumulate_grad(&[g]).unwrap();
    }

    fn theta(p: &ModelParameters) -> f64 {
        p.tensor("theta").unwrap().data()[0]
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = TrainConfig {
            lr: 1e-3,
            ..Default::default()
        };
        let mut p = scalar_params(0.5);
        let mut s = AdamState::new(&p);
        set_grad(&mut p, 1.0);
        adam_step(&mut p, &mut s, &cfg).unwrap();
        assert!(((0.5 - theta(&p)) - 1e-3).abs() < 1e-9);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let cfg = TrainConfig::default();
        let mut p = scalar_params(0.25);
        let mut s = AdamState::new(&p);
        set_grad(&mut p, 0.0);
        adam_step(&mut p, &mut s, &cfg).unwrap();
        assert_eq!(theta(&p), 0.25);
    }

    #[test]
    fn opposite_gradients_partly_cancel() {
        let cfg = TrainConfig {
            lr: 1e-2,
            ..Default::default()
        };
        let mut p = scalar_params(0.0);
        let mut s = AdamState::new(&p);
        set_grad(&mut p, 1.0);
        adam_step(&mut p, &mut s, &cfg).unwrap();
        set_grad(&mut p, -1.0);
        adam_step(&mut p, &mut s, &cfg).unwrap();
        assert!(theta(&p).abs() < 2.0 * cfg.lr);
    }

    #[test]
    fn descends_convex_quadratic() {
        let mut rng = crate::JobRng::seed_from_u64(5);
        for betas in [false, true] {
            let mut cfg = TrainConfig {
                lr: 1e-3,
                ..Default::default()
            };
            if betas {
                cfg = cfg.with_paper_betas();
            }
            for _ in 0..100 {
                let target: f64 = rng.gen_range(-5.0..5.0);
                let start: f64 = rng.gen_range(-5.0..5.0);
                if start == target {
                    continue;
                }
                let mut p = scalar_params(start);
                let mut s = AdamState::new(&p);
                set_grad(&mut p, start - target);
                adam_step(&mut p, &mut s, &cfg).unwrap();
                let loss = |x: f64| 0.5 * (x - target).powi(2);
                assert!(loss(theta(&p)) < loss(start));
            }
        }
    }

    #[test]
    fn config_validation_and_kv() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::default().with_paper_betas().validate().is_ok());
        assert!(TrainConfig {
            lr: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            beta2: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());

        let cfg = TrainConfig {
            seed: 17,
            final_step_only: true,
            ..Default::default()
        };
        let mut kv = KvMap::new();
        cfg.to_kv(&mut kv);
        let mut back = TrainConfig::default();
        back.update_from_kv(&kv).unwrap();
        assert_eq!(back, cfg);
    }
}
