use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Error, Result};
use crate::nn::{MlpGrads, MlpParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates and step count of Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    cfg: AdamConfig,
}

impl AdamState {
    pub fn new(p: &MlpParams, cfg: AdamConfig) -> Self {
        Self {
            m: vec![0.0; p.len()],
            v: vec![0.0; p.len()],
            t: 0,
            cfg,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }
}

/// One Adam update. On a non-finite result nothing is modified.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut MlpParams,
    grads: &MlpGrads,
    lr: f64,
) -> Result<()> {
    if !grads.matches(params) || state.m.len() != params.len() {
        return contract_err("optimizer state, parameters and gradients differ in shape");
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return contract_err(format!("learning rate must be positive, got {lr}"));
    }
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
    } = state.cfg;
    let t = state.t + 1;
    let bc1 = 1.0 - beta1.powf(t as f64);
    let bc2 = 1.0 - beta2.powf(t as f64);
    let g = grads.as_slice();
    let mut m = Vec::with_capacity(g.len());
    let mut v = Vec::with_capacity(g.len());
    let mut p = Vec::with_capacity(g.len());
    for (i, &gi) in g.iter().enumerate() {
        let mi = beta1 * state.m[i] + (1.0 - beta1) * gi;
        let vi = beta2 * state.v[i] + (1.0 - beta2) * gi * gi;
        let pi = params.as_slice()[i] - lr * (mi / bc1) / ((vi / bc2).sqrt() + epsilon);
        if !pi.is_finite() || !mi.is_finite() || !vi.is_finite() {
            return Err(Error::NonFinite("optimizer update"));
        }
        m.push(mi);
        v.push(vi);
        p.push(pi);
    }
    state.m = m;
    state.v = v;
    state.t = t;
    params.as_mut_slice().copy_from_slice(&p);
    Ok(())
}
