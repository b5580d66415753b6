use crate::autoenc::{Gradients, NetworkParams};
use crate::error::{Error, Result};

use super::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.adam_beta1,
            beta2: c.adam_beta2,
            epsilon: c.adam_epsilon,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected ADAM update.
pub fn adam_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut AdamState,
    config: &AdamConfig,
) -> Result<()> {
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let grad_tensors = grads.tensors();
    if grad_tensors.len() != names.len() || state.m.len() != names.len() {
        return Err(Error::param("gradient/state layout does not match parameters"));
    }
    for (name, g) in names.iter().zip(&grad_tensors) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - config.beta1.powi(t);
    let bias2 = 1.0 - config.beta2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(&grad_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if p.len() != g.len() {
            return Err(Error::param("gradient tensor length does not match parameter"));
        }
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
    if let Some((name, _)) = params.tensors().into_iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteGradient(format!("{name} (parameter overflow)")));
    }
    Ok(())
}
