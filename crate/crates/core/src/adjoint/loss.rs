use serde::{Deserialize, Serialize};

use super::ObservationMask;
use crate::dynamics::Trajectory;
use crate::error::{contract_err, Result};

/// Per-sample per-observed-step squared loss regarded as adequate.
pub const ADEQUATE_LOSS: f64 = 3e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Sum of squared errors over all observed (channel, step) pairs and samples.
    pub total: f64,
    pub per_sample_per_step: f64,
    /// `per_sample_per_step / ADEQUATE_LOSS`.
    pub loss_ratio: f64,
    pub samples: usize,
    pub observed_steps: usize,
}

impl LossReport {
    pub fn new(total: f64, samples: usize, observed_steps: usize) -> Self {
        let denom = (samples * observed_steps) as f64;
        let per = if denom > 0.0 { total / denom } else { 0.0 };
        Self {
            total,
            per_sample_per_step: per,
            loss_ratio: per / ADEQUATE_LOSS,
            samples,
            observed_steps,
        }
    }

    /// Pool two reports taken with the same mask.
    pub fn merge(&self, other: &LossReport) -> Result<LossReport> {
        if self.samples > 0 && other.samples > 0 && self.observed_steps != other.observed_steps {
            return contract_err("cannot merge loss reports with different observed step counts");
        }
        let steps = if self.samples > 0 {
            self.observed_steps
        } else {
            other.observed_steps
        };
        Ok(LossReport::new(
            self.total + other.total,
            self.samples + other.samples,
            steps,
        ))
    }

    pub fn empty() -> Self {
        LossReport::new(0.0, 0, 0)
    }
}

/// Squared error between predicted and true trajectories over the masked
/// pairs. Volume never contributes.
pub fn trajectory_loss(
    pred: &Trajectory,
    truth: &Trajectory,
    mask: &ObservationMask,
) -> Result<LossReport> {
    if pred.n_steps() != truth.n_steps() || pred.n_steps() != mask.len() {
        return contract_err(format!(
            "horizon mismatch: prediction {}, truth {}, mask {}",
            pred.n_steps(),
            truth.n_steps(),
            mask.len()
        ));
    }
    let total = squared_error(pred, truth, mask);
    Ok(LossReport::new(total, 1, mask.observed_steps()))
}

pub(crate) fn squared_error(pred: &Trajectory, truth: &Trajectory, mask: &ObservationMask) -> f64 {
    let (p, q) = (&pred.states()[1..], &truth.states()[1..]);
    // Channels are summed separately so that the loss is exactly additive
    // over channel-disjoint masks.
    let (mut sum_x, mut sum_s) = (0.0, 0.0);
    for t in 0..mask.len() {
        if mask.observe_x()[t] {
            let d = p[t].x - q[t].x;
            sum_x += d * d;
        }
        if mask.observe_s()[t] {
            let d = p[t].s - q[t].s;
            sum_s += d * d;
        }
    }
    sum_x + sum_s
}
