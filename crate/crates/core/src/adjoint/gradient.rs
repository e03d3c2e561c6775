//! Exact gradients of the trajectory loss with respect to the network
//! parameters, by reverse-mode sweep through the unrolled Euler steps.
//!
//! For one step with `mu = f(X, S)`, `h = dt`:
//!
//! ```text
//! X' = X + h (mu X - F X / V)
//! S' = S + h (-k1 mu X + F (S_in - S) / V)
//! V' = V + h F
//! ```
//!
//! Given adjoints `(aX', aS', aV')` of the next state, the adjoint of the rate is
//! `a_mu = h X (aX' - k1 aS')` and the state adjoints are
//!
//! ```text
//! aX = aX' (1 + h (mu - F / V)) - aS' h k1 mu        + a_mu df/dX
//! aS = aS' (1 - h F / V)                              + a_mu df/dS
//! aV = aX' h F X / V^2 - aS' h F (S_in - S) / V^2 + aV'
//! ```
//!
//! while `a_mu` is pushed into the network parameters.

use std::borrow::Borrow;

use rayon::prelude::*;

use super::loss::squared_error;
use super::{LossReport, ObservationMask};
use crate::datagen::Example;
use crate::dynamics::{euler_step_at, integrate, BioreactorConfig, RateModel, State};
use crate::error::{contract_err, Error, Result};
use crate::nn::{MlpGrads, MlpParams};

/// How the network output is turned into a rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RateOptions {
    /// Clamp the learned rate at zero from below.
    pub clamp_nonneg: bool,
}

/// The network viewed as a rate law.
#[derive(Clone, Copy, Debug)]
pub struct LearnedRate<'a> {
    pub params: &'a MlpParams,
    pub opts: RateOptions,
}

impl<'a> LearnedRate<'a> {
    pub fn new(params: &'a MlpParams, opts: RateOptions) -> Self {
        Self { params, opts }
    }
}

impl RateModel for LearnedRate<'_> {
    #[inline]
    fn rate(&self, x: f64, s: f64) -> f64 {
        let raw = self.params.eval(x, s);
        if self.opts.clamp_nonneg {
            raw.max(0.0)
        } else {
            raw
        }
    }
}

#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub grads: MlpGrads,
    pub loss: LossReport,
    /// Smallest |hidden preactivation| met along any trajectory in the batch.
    pub kink_margin: f64,
}

fn check_batch<B: Borrow<Example>>(
    batch: &[B],
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
) -> Result<()> {
    if batch.is_empty() {
        return contract_err("empty batch");
    }
    if mask.len() != cfg.n_steps {
        return contract_err(format!(
            "mask covers {} steps but the horizon is {}",
            mask.len(),
            cfg.n_steps
        ));
    }
    for ex in batch {
        let ex = ex.borrow();
        if ex.sample.s_in.len() != cfg.n_steps || ex.truth.n_steps() != cfg.n_steps {
            return contract_err("sample horizon does not match the configuration");
        }
    }
    Ok(())
}

struct SampleGradient {
    grads: MlpGrads,
    loss: f64,
    kink_margin: f64,
}

fn sample_gradient(
    p: &MlpParams,
    ex: &Example,
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
    opts: RateOptions,
) -> Result<SampleGradient> {
    let n = cfg.n_steps;
    let s_in = &ex.sample.s_in;
    let truth = ex.truth.states();

    // Forward: keep every state and rate for the reverse sweep.
    let mut states = Vec::with_capacity(n + 1);
    let mut rates = Vec::with_capacity(n);
    let mut active = Vec::with_capacity(n);
    let mut kink_margin = f64::INFINITY;
    let mut st = ex.sample.x0;
    if !st.is_finite() || st.max_abs() > cfg.blowup_bound {
        return Err(Error::Blowup {
            step: 0,
            sample: None,
        });
    }
    states.push(st);
    for (t, &feed) in s_in.iter().enumerate() {
        let raw = p.eval(st.x, st.s);
        kink_margin = kink_margin.min(p.kink_margin(st.x, st.s));
        let (rate, passes) = if opts.clamp_nonneg && raw <= 0.0 {
            (0.0, false)
        } else {
            (raw, true)
        };
        if !rate.is_finite() {
            return Err(Error::Blowup {
                step: t,
                sample: None,
            });
        }
        st = euler_step_at(t, st, feed, rate, cfg)?;
        if st.max_abs() > cfg.blowup_bound {
            return Err(Error::Blowup {
                step: t,
                sample: None,
            });
        }
        states.push(st);
        rates.push(rate);
        active.push(passes);
    }

    let (h, f, k1) = (cfg.dt, cfg.feed_rate, cfg.k1);
    let (obs_x, obs_s) = (mask.observe_x(), mask.observe_s());
    let mut grads = MlpGrads::zeros_like(p);
    let (mut loss_x, mut loss_s) = (0.0, 0.0);
    // Adjoint of states[t + 1].
    let (mut ax, mut as_, mut av) = (0.0, 0.0, 0.0);
    for t in (0..n).rev() {
        let pred = states[t + 1];
        if obs_x[t] {
            let d = pred.x - truth[t + 1].x;
            loss_x += d * d;
            ax += 2.0 * d;
        }
        if obs_s[t] {
            let d = pred.s - truth[t + 1].s;
            loss_s += d * d;
            as_ += 2.0 * d;
        }
        let State { x, s, v } = states[t];
        let mu = rates[t];
        let inv_v = 1.0 / v;
        let a_mu = h * x * (ax - k1 * as_);
        let mut nx = ax * (1.0 + h * (mu - f * inv_v)) - as_ * h * k1 * mu;
        let mut ns = as_ * (1.0 - h * f * inv_v);
        let nv = (ax * h * f * x - as_ * h * f * (s_in[t] - s)) * inv_v * inv_v + av;
        if active[t] && a_mu != 0.0 {
            let (gx, gs) = p.backward_into(x, s, a_mu, &mut grads);
            nx += gx;
            ns += gs;
        }
        ax = nx;
        as_ = ns;
        av = nv;
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("parameter gradient"));
    }
    Ok(SampleGradient {
        grads,
        loss: loss_x + loss_s,
        kink_margin,
    })
}

/// Gradient of the summed batch loss. Per-sample sweeps run on the current
/// rayon pool; the reduction is in batch order so results do not depend on
/// the thread count.
pub fn bptt_gradient<B: Borrow<Example> + Sync>(
    p: &MlpParams,
    batch: &[B],
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
    opts: RateOptions,
) -> Result<BatchGradient> {
    check_batch(batch, mask, cfg)?;
    let per_sample: Vec<Result<SampleGradient>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| sample_gradient(p, ex.borrow(), mask, cfg, opts).map_err(|e| e.in_sample(i)))
        .collect();
    let mut grads = MlpGrads::zeros_like(p);
    let mut total = 0.0;
    let mut kink_margin = f64::INFINITY;
    for r in per_sample {
        let g = r?;
        grads.add_assign(&g.grads);
        total += g.loss;
        kink_margin = kink_margin.min(g.kink_margin);
    }
    Ok(BatchGradient {
        grads,
        loss: LossReport::new(total, batch.len(), mask.observed_steps()),
        kink_margin,
    })
}

/// Summed batch loss by plain forward integration. Shares nothing with the
/// reverse sweep beyond the Euler step itself.
pub fn batch_loss<B: Borrow<Example> + Sync>(
    p: &MlpParams,
    batch: &[B],
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
    opts: RateOptions,
) -> Result<LossReport> {
    check_batch(batch, mask, cfg)?;
    let rate = LearnedRate::new(p, opts);
    let losses: Vec<Result<f64>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let ex = ex.borrow();
            integrate(ex.sample.x0, &ex.sample.s_in, &rate, cfg)
                .map(|pred| squared_error(&pred, &ex.truth, mask))
                .map_err(|e| e.in_sample(i))
        })
        .collect();
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(LossReport::new(total, batch.len(), mask.observed_steps()))
}

/// Central finite differences of [`batch_loss`], one parameter at a time.
/// Costs two batch integrations per parameter; meant for verification.
pub fn fd_gradient<B: Borrow<Example> + Sync>(
    p: &MlpParams,
    batch: &[B],
    mask: &ObservationMask,
    cfg: &BioreactorConfig,
    opts: RateOptions,
    step: f64,
) -> Result<MlpGrads> {
    if !(step > 0.0 && step.is_finite()) {
        return contract_err("finite-difference step must be positive");
    }
    let mut out = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let mut plus = p.clone();
        plus.as_mut_slice()[i] += step;
        let mut minus = p.clone();
        minus.as_mut_slice()[i] -= step;
        let lp = batch_loss(&plus, batch, mask, cfg, opts)?.total;
        let lm = batch_loss(&minus, batch, mask, cfg, opts)?.total;
        out.push((lp - lm) / (2.0 * step));
    }
    MlpGrads::from_flat(p.hidden(), out)
}
