use serde::{Deserialize, Serialize};

use super::params::ParameterStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Coefficient of the `weight_decay · value` term added to each gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        // lr = 0 is accepted: it freezes parameters, which the trainers rely on
        // for fixed-point checks.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update over every parameter, then zeroes the gradients.
///
/// `step_index` is 1-based. If any gradient is non-finite nothing is modified.
pub fn adam_step(store: &mut ParameterStore, cfg: &AdamConfig, step_index: u64) -> Result<()> {
    if step_index == 0 {
        return Err(Error::Training("adam step index must be >= 1".into()));
    }
    for (name, p) in store.iter() {
        if !p.grad.is_finite() {
            return Err(Error::Training(format!("non-finite gradient in parameter {name:?}")));
        }
    }

    let t = step_index as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    for (_, p) in store.iter_mut() {
        let value = p.value.data_mut();
        let grad = p.grad.data_mut();
        let m = p.adam_m.data_mut();
        let v = p.adam_v.data_mut();
        for i in 0..value.len() {
            let g = grad[i] + cfg.weight_decay * value[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            grad[i] = 0.0;
        }
    }
    store.step = step_index;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor2;

    fn scalar_store(v: f64) -> (ParameterStore, crate::numerics::ParamId) {
        let mut s = ParameterStore::new();
        let id = s.insert("x", Tensor2::filled(1, 1, v)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = ParameterStore::new();
        let id = s.insert("w", Tensor2::from_rows(&[vec![0.3, -1.2], vec![4.0, 0.0]]).unwrap()).unwrap();
        let before = s.value(id).clone();
        for step in 1..=5 {
            adam_step(&mut s, &AdamConfig::default(), step).unwrap();
        }
        assert_eq!(s.value(id), &before);
    }

    #[test]
    fn first_step_hand_value() {
        // m = 0.1, v = 0.001; bias-corrected both become 1, so v -= 0.1 / (1 + 1e-8).
        let (mut s, id) = scalar_store(1.0);
        s.grad_mut(id).set(0, 0, 1.0);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        adam_step(&mut s, &cfg, 1).unwrap();
        let got = s.value(id).get(0, 0);
        assert!((got - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((got - 0.9).abs() < 1e-8);
        assert_eq!(s.grad(id).get(0, 0), 0.0);
    }

    #[test]
    fn repeated_steps_decrease_convex_quadratic() {
        // loss = (x - 3)^2, grad = 2(x - 3)
        let (mut s, id) = scalar_store(0.0);
        let loss = |x: f64| (x - 3.0) * (x - 3.0);
        let cfg = AdamConfig::with_learning_rate(0.1);
        let mut prev = loss(s.value(id).get(0, 0));
        for step in 1..=2 {
            let x = s.value(id).get(0, 0);
            s.grad_mut(id).set(0, 0, 2.0 * (x - 3.0));
            adam_step(&mut s, &cfg, step).unwrap();
            let now = loss(s.value(id).get(0, 0));
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, id) = scalar_store(1.0);
        s.grad_mut(id).set(0, 0, f64::NAN);
        let err = adam_step(&mut s, &AdamConfig::default(), 1).unwrap_err();
        assert!(err.to_string().contains("\"x\""));
        assert_eq!(s.value(id).get(0, 0), 1.0);
    }

    #[test]
    fn weight_decay_shrinks_without_gradient() {
        let (mut s, id) = scalar_store(2.0);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::with_learning_rate(0.1)
        };
        adam_step(&mut s, &cfg, 1).unwrap();
        assert!(s.value(id).get(0, 0) < 2.0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig::default().validate().is_ok());
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { epsilon: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { weight_decay: -1.0, ..Default::default() }.validate().is_err());
    }
}
