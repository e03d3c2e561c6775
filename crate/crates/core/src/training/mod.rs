//! Two-stage training: a coarse stage on stride-subsampled data, then the
//! full-resolution stage starting from its result. Each stage runs Adam on
//! shuffled mini-batches until a stopping rule fires.

mod adam;
mod eval;
mod history;
mod stopping;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use eval::{evaluate, evaluate_per_sample, mu_surface_error, predict, Region};
pub use history::{EpochRecord, StageSummary, TrainHistory, HISTORY_CSV_HEADER};
pub use stopping::{check_stopping, StopDecision, StopMonitor, Termination};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{
    batch_loss, bptt_gradient, make_mask, mask_schemes, LossReport, ObservationMask, RateOptions,
    ADEQUATE_LOSS, S_ONLY_DENSE,
};
use crate::datagen::{Corpus, Example};
use crate::dynamics::BioreactorConfig;
use crate::error::{config_err, contract_err, Error, Result};
use crate::nn::{mlp_init, InitSpec, MlpParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epoch cap per stage.
    pub epochs_max: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub stage1_coarsen_factor: usize,
    /// Observation scheme used for the training and validation losses.
    pub mask_mode: String,
    /// Rescale batch gradients whose L2 norm exceeds this.
    #[serde(default)]
    pub clip_norm: Option<f64>,
    pub clamp_nonneg: bool,
    pub hidden: usize,
    pub patience: usize,
    pub generalization_limit: f64,
    pub adequate: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs_max: 2000,
            seed: 0,
            stage1_coarsen_factor: 8,
            mask_mode: S_ONLY_DENSE.to_string(),
            clip_norm: Some(1e3),
            clamp_nonneg: false,
            hidden: 16,
            patience: 12,
            generalization_limit: 2.0,
            adequate: ADEQUATE_LOSS,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return config_err(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 || self.epochs_max == 0 || self.hidden == 0 {
            return config_err("batch size, epoch cap and hidden width must be at least 1");
        }
        if self.stage1_coarsen_factor == 0 {
            return config_err("coarsening factor must be at least 1");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return config_err(format!("clip norm must be positive, got {c}"));
            }
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return config_err("Adam requires betas in [0, 1) and a positive epsilon");
        }
        mask_schemes().get(&self.mask_mode)?;
        StopMonitor::new(self.patience, self.generalization_limit, self.adequate)?;
        Ok(())
    }

    pub fn rate_options(&self) -> RateOptions {
        RateOptions {
            clamp_nonneg: self.clamp_nonneg,
        }
    }

    fn monitor(&self) -> Result<StopMonitor> {
        StopMonitor::new(self.patience, self.generalization_limit, self.adequate)
    }
}

/// Hooks for checkpointing and progress output.
pub trait TrainObserver {
    fn on_epoch(&mut self, _record: &EpochRecord, _params: &MlpParams) -> Result<()> {
        Ok(())
    }

    fn on_stage_end(&mut self, _summary: &StageSummary, _params: &MlpParams) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Parameters at the end of the coarse stage, when one ran.
    pub stage1_params: Option<MlpParams>,
    pub history: TrainHistory,
}

impl TrainOutcome {
    pub fn final_termination(&self) -> Option<Termination> {
        self.history.stages.last().map(|s| s.reason)
    }

    pub fn aborted(&self) -> bool {
        self.final_termination() == Some(Termination::BlowupAbort)
    }
}

/// Map a sample index inside a shuffled batch back to the split.
fn remap_sample(err: Error, chunk: &[usize]) -> Error {
    match err {
        Error::Blowup {
            step,
            sample: Some(local),
        } => Error::Blowup {
            step,
            sample: chunk.get(local).copied(),
        },
        other => other,
    }
}

/// One pass over `train` in a shuffled order. Returns the summed loss of the
/// batches as they were visited.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch(
    params: &mut MlpParams,
    adam: &mut AdamState,
    train: &[Example],
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
    tc: &TrainConfig,
    stage: u8,
    epoch: usize,
) -> Result<LossReport> {
    if tc.batch_size > train.len() {
        return contract_err(format!(
            "batch size {} exceeds the {} training samples",
            tc.batch_size,
            train.len()
        ));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(((stage as u64) << 32) | epoch as u64);
    order.shuffle(&mut rng);

    let mut total = 0.0;
    let mut batch: Vec<&Example> = Vec::with_capacity(tc.batch_size);
    for (b, chunk) in order.chunks(tc.batch_size).enumerate() {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| &train[i]));
        let wrap = |e: Error| Error::Batch {
            batch: b,
            source: Box::new(remap_sample(e, chunk)),
        };
        let mut g = bptt_gradient(params, &batch, mask, cfg, tc.rate_options()).map_err(wrap)?;
        if let Some(clip) = tc.clip_norm {
            let norm = g.grads.l2_norm();
            if norm > clip {
                g.grads.scale(clip / norm);
            }
        }
        adam_step(adam, params, &g.grads, tc.learning_rate).map_err(wrap)?;
        total += g.loss.total;
    }
    Ok(LossReport::new(total, train.len(), mask.observed_steps()))
}

/// Data seen by one stage.
#[derive(Clone, Copy, Debug)]
pub struct StageData<'a> {
    pub cfg: &'a BioreactorConfig,
    pub train: &'a [Example],
    pub validation: &'a [Example],
}

/// Run one stage from a fresh optimizer state. Numerical blowup ends the
/// stage with [`Termination::BlowupAbort`] and leaves `params` at the last
/// finite update; other failures are returned as errors.
pub fn train_stage(
    stage: u8,
    params: &mut MlpParams,
    data: StageData<'_>,
    tc: &TrainConfig,
    history: &mut TrainHistory,
    observer: &mut dyn TrainObserver,
) -> Result<Termination> {
    tc.validate()?;
    if data.validation.is_empty() {
        return contract_err("validation split is empty");
    }
    let mask = make_mask(&tc.mask_mode, data.cfg.n_steps)?;
    let mut adam = AdamState::new(params, tc.adam);
    let mut monitor = tc.monitor()?;
    let opts = tc.rate_options();

    let mut last: Option<(LossReport, LossReport)> = None;
    let mut reason = Termination::EpochLimit;
    let mut message = None;
    let mut done = 0;
    for epoch in 1..=tc.epochs_max {
        let start = Instant::now();
        // Both losses are measured at the end-of-epoch parameters.
        let step = run_epoch(
            params, &mut adam, data.train, &mask, data.cfg, tc, stage, epoch,
        )
        .and_then(|_| {
            let train = batch_loss(params, data.train, &mask, data.cfg, opts)?;
            let val = batch_loss(params, data.validation, &mask, data.cfg, opts)?;
            Ok((train, val))
        });
        let (train, val) = match step {
            Ok(v) => v,
            Err(e) if e.is_blowup() => {
                reason = Termination::BlowupAbort;
                message = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        done = epoch;
        let record = EpochRecord {
            stage,
            epoch,
            train,
            validation: val,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&record, params)?;
        history.epochs.push(record);
        let decision = check_stopping(&mut monitor, &train, &val);
        last = Some((train, val));
        if let Some(t) = Termination::from_decision(decision) {
            reason = t;
            break;
        }
    }
    let (final_train, final_validation) = match last {
        Some((t, v)) => (Some(t), Some(v)),
        None => (None, None),
    };
    let summary = StageSummary {
        stage,
        reason,
        epochs: done,
        final_train,
        final_validation,
        message,
    };
    observer.on_stage_end(&summary, params)?;
    history.stages.push(summary);
    Ok(reason)
}

/// Coarse stage on the corpus subsampled by `stage1_coarsen_factor`, then
/// the full-resolution stage. The second stage is skipped if the first
/// blew up.
pub fn train_two_stage(
    corpus: &Corpus,
    tc: &TrainConfig,
    init: &InitSpec,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    tc.validate()?;
    train_two_stage_from(corpus, tc, mlp_init(tc.hidden, init)?, observer)
}

/// [`train_two_stage`] from given initial parameters.
pub fn train_two_stage_from(
    corpus: &Corpus,
    tc: &TrainConfig,
    mut params: MlpParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    check_width(&params, tc)?;
    let coarse = corpus.coarsened(tc.stage1_coarsen_factor)?;
    let mut history = TrainHistory::default();
    let stage1 = StageData {
        cfg: &coarse.cfg,
        train: &coarse.train,
        validation: &coarse.validation,
    };
    let reason = train_stage(1, &mut params, stage1, tc, &mut history, observer)?;
    let stage1_params = params.clone();
    if reason != Termination::BlowupAbort {
        let stage2 = StageData {
            cfg: &corpus.cfg,
            train: &corpus.train,
            validation: &corpus.validation,
        };
        train_stage(2, &mut params, stage2, tc, &mut history, observer)?;
    }
    Ok(TrainOutcome {
        params,
        stage1_params: Some(stage1_params),
        history,
    })
}

fn check_width(params: &MlpParams, tc: &TrainConfig) -> Result<()> {
    if params.hidden() != tc.hidden {
        return config_err(format!(
            "initial parameters have {} hidden units, configuration asks for {}",
            params.hidden(),
            tc.hidden
        ));
    }
    Ok(())
}

/// Full-resolution stage only, from given parameters.
pub fn train_full_resolution(
    corpus: &Corpus,
    tc: &TrainConfig,
    mut params: MlpParams,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    check_width(&params, tc)?;
    let mut history = TrainHistory::default();
    let data = StageData {
        cfg: &corpus.cfg,
        train: &corpus.train,
        validation: &corpus.validation,
    };
    train_stage(2, &mut params, data, tc, &mut history, observer)?;
    Ok(TrainOutcome {
        params,
        stage1_params: None,
        history,
    })
}
