use serde::{Deserialize, Serialize};

use crate::adjoint::{LossReport, ADEQUATE_LOSS};
use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    ImprovementFailure,
    GeneralizationFailure,
    AdequatePerformance,
}

/// Why a training stage ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ImprovementFailure,
    GeneralizationFailure,
    AdequatePerformance,
    EpochLimit,
    BlowupAbort,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::ImprovementFailure => "improvement_failure",
            Termination::GeneralizationFailure => "generalization_failure",
            Termination::AdequatePerformance => "adequate_performance",
            Termination::EpochLimit => "epoch_limit",
            Termination::BlowupAbort => "blowup_abort",
        }
    }

    pub fn from_decision(d: StopDecision) -> Option<Self> {
        match d {
            StopDecision::Continue => None,
            StopDecision::ImprovementFailure => Some(Termination::ImprovementFailure),
            StopDecision::GeneralizationFailure => Some(Termination::GeneralizationFailure),
            StopDecision::AdequatePerformance => Some(Termination::AdequatePerformance),
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Early-stopping state. All comparisons use per-sample per-step losses.
///
/// - adequate performance: validation loss below `adequate`;
/// - generalization failure: best validation loss so far divided by the
///   current training loss exceeds `generalization_limit`;
/// - improvement failure: `patience` consecutive epochs without a strict
///   improvement of the training loss.
///
/// When several fire in the same epoch the first in that list wins.
#[derive(Clone, Debug, PartialEq)]
pub struct StopMonitor {
    pub best_train_loss: f64,
    pub best_val_loss: f64,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    pub generalization_limit: f64,
    pub adequate: f64,
}

impl Default for StopMonitor {
    fn default() -> Self {
        Self::new(12, 2.0, ADEQUATE_LOSS).expect("default thresholds are valid")
    }
}

impl StopMonitor {
    pub fn new(patience: usize, generalization_limit: f64, adequate: f64) -> Result<Self> {
        if patience == 0 || !(generalization_limit > 0.0) || !(adequate > 0.0) {
            return config_err("stopping thresholds must be positive");
        }
        Ok(Self {
            best_train_loss: f64::INFINITY,
            best_val_loss: f64::INFINITY,
            epochs_since_improvement: 0,
            patience,
            generalization_limit,
            adequate,
        })
    }
}

pub fn check_stopping(mon: &mut StopMonitor, train: &LossReport, val: &LossReport) -> StopDecision {
    let (tr, va) = (train.per_sample_per_step, val.per_sample_per_step);
    if va < mon.best_val_loss {
        mon.best_val_loss = va;
    }
    if tr < mon.best_train_loss {
        mon.best_train_loss = tr;
        mon.epochs_since_improvement = 0;
    } else {
        mon.epochs_since_improvement += 1;
    }

    if va < mon.adequate {
        StopDecision::AdequatePerformance
    } else if mon.best_val_loss / tr > mon.generalization_limit {
        StopDecision::GeneralizationFailure
    } else if mon.epochs_since_improvement >= mon.patience {
        StopDecision::ImprovementFailure
    } else {
        StopDecision::Continue
    }
}
