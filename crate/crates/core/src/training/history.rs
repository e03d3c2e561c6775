use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Termination;
use crate::adjoint::LossReport;
use crate::error::Result;
use crate::fmt::f64_text;

pub const HISTORY_CSV_HEADER: &str =
    "stage,epoch,train_loss,train_ratio,val_loss,val_ratio,wall_seconds";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: u8,
    /// One-based within the stage.
    pub epoch: usize,
    pub train: LossReport,
    pub validation: LossReport,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: u8,
    pub reason: Termination,
    /// Completed epochs.
    pub epochs: usize,
    pub final_train: Option<LossReport>,
    pub final_validation: Option<LossReport>,
    pub message: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stages: Vec<StageSummary>,
}

impl TrainHistory {
    pub fn stage_epochs(&self, stage: u8) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(move |r| r.stage == stage)
    }

    pub fn summary(&self, stage: u8) -> Option<&StageSummary> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{HISTORY_CSV_HEADER}")?;
        for r in &self.epochs {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.stage,
                r.epoch,
                f64_text(r.train.per_sample_per_step),
                f64_text(r.train.loss_ratio),
                f64_text(r.validation.per_sample_per_step),
                f64_text(r.validation.loss_ratio),
                f64_text(r.wall_seconds)
            )?;
        }
        Ok(())
    }

    /// One `key=value` line per finished stage.
    pub fn write_terminations<W: Write>(&self, mut w: W) -> Result<()> {
        for s in &self.stages {
            write!(
                w,
                "stage={} reason={} epochs={}",
                s.stage, s.reason, s.epochs
            )?;
            if let Some(t) = &s.final_train {
                write!(w, " train_ratio={}", f64_text(t.loss_ratio))?;
            }
            if let Some(v) = &s.final_validation {
                write!(w, " val_ratio={}", f64_text(v.loss_ratio))?;
            }
            if let Some(m) = &s.message {
                write!(w, " message={m:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
