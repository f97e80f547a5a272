//! Adam optimizer and exponential moving average of parameters.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.0, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment buffers for each trainable slot of one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = |p: &crate::tensor::Param| if p.trainable { vec![0.0; p.tensor.len()] } else { Vec::new() };
        Self {
            config,
            step: 0,
            m: params.entries().iter().map(zeros).collect(),
            v: params.entries().iter().map(zeros).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one bias-corrected Adam update and clears the gradients.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Structure(format!(
                "optimizer tracks {} slots, parameter set has {}",
                self.m.len(),
                params.len()
            )));
        }
        for p in params.entries() {
            if p.trainable && p.tensor.grad().is_none() {
                return Err(Error::MissingGrad(p.name.clone()));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (slot, p) in params.entries_mut().iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let g = p.tensor.take_grad().expect("checked above");
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for (((w, g), m), v) in p.tensor.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers as named tensors for checkpointing.
    pub fn export(&self, params: &ParamSet) -> Vec<(String, Tensor)> {
        let mut out = vec![("step".to_string(), Tensor::scalar(self.step as f64))];
        for (slot, p) in params.entries().iter().enumerate() {
            if p.trainable {
                let shape = p.tensor.shape().to_vec();
                out.push((format!("m.{}", p.name), Tensor::new(shape.clone(), self.m[slot].clone()).unwrap()));
                out.push((format!("v.{}", p.name), Tensor::new(shape, self.v[slot].clone()).unwrap()));
            }
        }
        out
    }

    /// Restores moment buffers exported by [`AdamState::export`].
    pub fn import(params: &ParamSet, config: AdamConfig, tensors: &[(String, Tensor)]) -> Result<Self> {
        let mut state = Self::new(params, config);
        let find = |name: &str| {
            tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t).ok_or_else(|| invalid(format!("missing `{name}`")))
        };
        state.step = find("step")?.data()[0] as u64;
        for (slot, p) in params.entries().iter().enumerate() {
            if p.trainable {
                state.m[slot] = find(&format!("m.{}", p.name))?.data().to_vec();
                state.v[slot] = find(&format!("v.{}", p.name))?.data().to_vec();
            }
        }
        Ok(state)
    }
}

/// `shadow ← decay·shadow + (1−decay)·live` for every entry, buffers included.
pub fn ema_update(shadow: &mut ParamSet, live: &ParamSet, decay: f64) -> Result<()> {
    if !(0.0..1.0).contains(&decay) {
        return Err(invalid(format!("EMA decay must be in [0, 1), got {decay}")));
    }
    shadow.check_same_structure(live)?;
    for (s, l) in shadow.entries_mut().iter_mut().zip(live.entries()) {
        for (a, b) in s.tensor.data_mut().iter_mut().zip(l.tensor.data()) {
            *a = decay * *a + (1.0 - decay) * b;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(value), true);
        p
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.5);
        let mut adam = AdamState::new(&p, AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-12 });
        p.tensor_mut(0).accumulate_grad(&[1.0]).unwrap();
        adam.step(&mut p).unwrap();
        assert!((p.tensor(0).data()[0] - (0.5 - 1e-3)).abs() < 1e-9);
        assert!(p.tensor(0).grad().is_none());
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = single(0.5);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        for _ in 0..10 {
            p.tensor_mut(0).accumulate_grad(&[0.0]).unwrap();
            adam.step(&mut p).unwrap();
        }
        assert_eq!(p.tensor(0).data()[0], 0.5);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut p = single(0.5);
        let mut adam = AdamState::new(&p, AdamConfig::default());
        match adam.step(&mut p) {
            Err(Error::MissingGrad(name)) => assert_eq!(name, "w"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn descends_quadratic() {
        let mut p = single(1.0);
        let mut adam = AdamState::new(&p, AdamConfig { lr: 0.05, ..AdamConfig::default() });
        for _ in 0..100 {
            let w = p.tensor(0).data()[0];
            p.tensor_mut(0).accumulate_grad(&[2.0 * w]).unwrap();
            adam.step(&mut p).unwrap();
        }
        assert!(p.tensor(0).data()[0].abs() < 0.1);
    }

    #[test]
    fn ema_examples() {
        let mut shadow = single(0.0);
        let live = single(1.0);
        ema_update(&mut shadow, &live, 0.999).unwrap();
        assert!((shadow.tensor(0).data()[0] - 0.001).abs() < 1e-15);

        let mut shadow = single(0.0);
        ema_update(&mut shadow, &live, 0.0).unwrap();
        assert_eq!(shadow.tensor(0).data()[0], 1.0);

        let mut shadow = single(0.0);
        let (decay, v, n) = (0.9, 3.0, 25);
        let live = single(v);
        for _ in 0..n {
            ema_update(&mut shadow, &live, decay).unwrap();
        }
        let expected = v * (1.0 - f64::powi(decay, n));
        assert!((shadow.tensor(0).data()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn ema_rejects_mismatch_and_bad_decay() {
        let mut a = single(0.0);
        let mut b = ParamSet::new();
        b.push("other", Tensor::scalar(0.0), true);
        assert!(ema_update(&mut a, &b, 0.5).is_err());
        assert!(ema_update(&mut a, &single(1.0), 1.0).is_err());
    }
}
