use std::sync::LazyLock;

use crate::error::{config_err, contract_err, Result};
use crate::registry::Registry;

/// Which channels are compared against ground truth at which steps. Entry `t`
/// refers to the state produced by step `t`, i.e. `states[t + 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationMask {
    observe_x: Vec<bool>,
    observe_s: Vec<bool>,
}

impl ObservationMask {
    pub fn new(observe_x: Vec<bool>, observe_s: Vec<bool>) -> Result<Self> {
        if observe_x.len() != observe_s.len() || observe_x.is_empty() {
            return contract_err(format!(
                "mask channels must have equal non-zero length, got {} and {}",
                observe_x.len(),
                observe_s.len()
            ));
        }
        if !observe_x.iter().chain(&observe_s).any(|&b| b) {
            return contract_err("mask observes nothing");
        }
        Ok(Self {
            observe_x,
            observe_s,
        })
    }

    pub fn len(&self) -> usize {
        self.observe_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observe_x.is_empty()
    }

    pub fn observe_x(&self) -> &[bool] {
        &self.observe_x
    }

    pub fn observe_s(&self) -> &[bool] {
        &self.observe_s
    }

    /// Steps at which at least one channel is observed; the per-step
    /// normalization divides by this count.
    pub fn observed_steps(&self) -> usize {
        self.observe_x
            .iter()
            .zip(&self.observe_s)
            .filter(|(x, s)| **x || **s)
            .count()
    }

    pub fn observed_step_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&t| self.observe_x[t] || self.observe_s[t])
            .collect()
    }
}

pub trait MaskScheme: Send + Sync {
    fn build(&self, n_steps: usize) -> Result<ObservationMask>;
}

/// S at every step, X never.
struct SOnlyDense;
/// X and S at zero-based steps 7, 15, 23, ...
struct EveryNth(usize);
/// X and S at every step.
struct Dense;

impl MaskScheme for SOnlyDense {
    fn build(&self, n: usize) -> Result<ObservationMask> {
        ObservationMask::new(vec![false; n], vec![true; n])
    }
}

impl MaskScheme for EveryNth {
    fn build(&self, n: usize) -> Result<ObservationMask> {
        let pick: Vec<bool> = (0..n).map(|t| t % self.0 == self.0 - 1).collect();
        if n < self.0 {
            return contract_err(format!(
                "every-{}th mask needs at least {} steps, got {n}",
                self.0, self.0
            ));
        }
        ObservationMask::new(pick.clone(), pick)
    }
}

impl MaskScheme for Dense {
    fn build(&self, n: usize) -> Result<ObservationMask> {
        ObservationMask::new(vec![true; n], vec![true; n])
    }
}

pub const S_ONLY_DENSE: &str = "s_only_dense";
pub const XS_EVERY_8TH: &str = "xs_every_8th";
pub const XS_DENSE: &str = "xs_dense";

static MASKS: LazyLock<Registry<dyn MaskScheme>> = LazyLock::new(|| {
    let mut reg: Registry<dyn MaskScheme> = Registry::new("mask mode");
    reg.register(S_ONLY_DENSE, Box::new(SOnlyDense)).unwrap();
    reg.register(XS_EVERY_8TH, Box::new(EveryNth(8))).unwrap();
    reg.register(XS_DENSE, Box::new(Dense)).unwrap();
    reg
});

pub fn mask_schemes() -> &'static Registry<dyn MaskScheme> {
    &MASKS
}

pub fn make_mask(mode: &str, n_steps: usize) -> Result<ObservationMask> {
    if n_steps == 0 {
        return config_err("mask horizon must be at least 1 step");
    }
    mask_schemes().get(mode)?.build(n_steps)
}
