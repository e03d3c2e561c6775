//! Fedbatch bioreactor dynamics.
//!
//! ```text
//! dX/dt = mu X - F X / V
//! dS/dt = -k1 mu X + F (S_in - S) / V
//! dV/dt = F
//! ```
//!
//! with the Haldane law `mu(S) = mu* S / (S + K_m + S^2 / K_i)` as ground
//! truth. Integration is explicit Euler; the output of each step is the state
//! fed to the next one.

mod export;

pub use export::{read_trajectory_csv, write_trajectory_csv, TRAJECTORY_CSV_HEADER};

use serde::{Deserialize, Serialize};

use crate::error::{config_err, contract_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct State {
    /// Reactant concentration.
    pub x: f64,
    /// Substrate concentration.
    pub s: f64,
    /// Total volume.
    pub v: f64,
}

impl State {
    pub const fn new(x: f64, s: f64, v: f64) -> Self {
        Self { x, s, v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.s.is_finite() && self.v.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.x.abs().max(self.s.abs()).max(self.v.abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BioreactorConfig {
    /// Yield constant.
    pub k1: f64,
    /// Constant feed rate F.
    pub feed_rate: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub mu_star: f64,
    pub k_m: f64,
    pub k_i: f64,
    /// Any state component above this magnitude is reported as blowup.
    pub blowup_bound: f64,
}

impl Default for BioreactorConfig {
    fn default() -> Self {
        Self {
            k1: 2.0,
            feed_rate: 0.05,
            dt: 0.05,
            n_steps: 2048,
            mu_star: 0.5,
            k_m: 0.12,
            k_i: 0.9,
            blowup_bound: 1e6,
        }
    }
}

impl BioreactorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k1", self.k1),
            ("dt", self.dt),
            ("mu_star", self.mu_star),
            ("k_m", self.k_m),
            ("k_i", self.k_i),
            ("blowup_bound", self.blowup_bound),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return config_err(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.feed_rate.is_finite() && self.feed_rate >= 0.0) {
            return config_err(format!("feed_rate must be >= 0, got {}", self.feed_rate));
        }
        if self.n_steps == 0 {
            return config_err("n_steps must be at least 1");
        }
        Ok(())
    }

    /// Physical time covered by the horizon.
    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn haldane(&self) -> Haldane {
        Haldane {
            mu_star: self.mu_star,
            k_m: self.k_m,
            k_i: self.k_i,
        }
    }
}

/// A rate law `mu(X, S)` that can be plugged into the integrator.
pub trait RateModel: Sync {
    fn rate(&self, x: f64, s: f64) -> f64;
}

impl<F> RateModel for F
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    fn rate(&self, x: f64, s: f64) -> f64 {
        self(x, s)
    }
}

/// Substrate-inhibited Haldane kinetics. Independent of X.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Haldane {
    pub mu_star: f64,
    pub k_m: f64,
    pub k_i: f64,
}

impl Haldane {
    pub fn eval(&self, s: f64) -> f64 {
        s * self.mu_star / (s + self.k_m + s * s / self.k_i)
    }

    /// Location of the maximum on `s >= 0`.
    pub fn argmax(&self) -> f64 {
        (self.k_m * self.k_i).sqrt()
    }
}

impl RateModel for Haldane {
    fn rate(&self, _x: f64, s: f64) -> f64 {
        self.eval(s)
    }
}

pub fn haldane_mu(s: f64, cfg: &BioreactorConfig) -> f64 {
    cfg.haldane().eval(s)
}

/// Time derivatives `(dX, dS, dV)`.
pub fn rhs(st: State, mu: f64, s_in: f64, cfg: &BioreactorConfig) -> Result<(f64, f64, f64)> {
    rhs_at(0, st, mu, s_in, cfg)
}

fn rhs_at(
    step: usize,
    st: State,
    mu: f64,
    s_in: f64,
    cfg: &BioreactorConfig,
) -> Result<(f64, f64, f64)> {
    if !(st.v > 0.0) {
        return Err(Error::Domain {
            step,
            msg: format!("volume must be positive, got {}", st.v),
        });
    }
    let f = cfg.feed_rate;
    let dx = mu * st.x - f * st.x / st.v;
    let ds = -cfg.k1 * mu * st.x + f * (s_in - st.s) / st.v;
    Ok((dx, ds, f))
}

/// One explicit Euler step.
pub fn euler_step(st: State, s_in: f64, mu: f64, cfg: &BioreactorConfig) -> Result<State> {
    euler_step_at(0, st, s_in, mu, cfg)
}

pub(crate) fn euler_step_at(
    step: usize,
    st: State,
    s_in: f64,
    mu: f64,
    cfg: &BioreactorConfig,
) -> Result<State> {
    let (dx, ds, dv) = rhs_at(step, st, mu, s_in, cfg)?;
    let next = State {
        x: st.x + cfg.dt * dx,
        s: st.s + cfg.dt * ds,
        v: st.v + cfg.dt * dv,
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Blowup { step, sample: None })
    }
}

/// An integrated (or observed) trajectory. `states[0]` is the initial state
/// and `states[t + 1]` the state after consuming `s_in[t]`. Always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    states: Vec<State>,
    s_in: Vec<f64>,
}

impl Trajectory {
    pub fn new(states: Vec<State>, s_in: Vec<f64>) -> Result<Self> {
        if s_in.is_empty() || states.len() != s_in.len() + 1 {
            return contract_err(format!(
                "trajectory needs n + 1 states for n >= 1 inputs, got {} states and {} inputs",
                states.len(),
                s_in.len()
            ));
        }
        if let Some(step) = states.iter().position(|s| !s.is_finite()) {
            return Err(Error::Blowup { step, sample: None });
        }
        if s_in.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feed concentration series"));
        }
        Ok(Self { states, s_in })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn s_in(&self) -> &[f64] {
        &self.s_in
    }

    pub fn n_steps(&self) -> usize {
        self.s_in.len()
    }

    pub fn initial(&self) -> State {
        self.states[0]
    }
}

/// Unroll the Euler recurrence over `s_in` with rate law `mu`.
pub fn integrate<M: RateModel + ?Sized>(
    x0: State,
    s_in: &[f64],
    mu: &M,
    cfg: &BioreactorConfig,
) -> Result<Trajectory> {
    if s_in.len() != cfg.n_steps {
        return contract_err(format!(
            "feed series has {} entries but the horizon is {} steps",
            s_in.len(),
            cfg.n_steps
        ));
    }
    if !x0.is_finite() || x0.max_abs() > cfg.blowup_bound {
        return Err(Error::Blowup {
            step: 0,
            sample: None,
        });
    }
    let mut states = Vec::with_capacity(s_in.len() + 1);
    states.push(x0);
    let mut st = x0;
    for (t, &feed) in s_in.iter().enumerate() {
        let rate = mu.rate(st.x, st.s);
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
    }
    Trajectory::new(states, s_in.to_vec())
}
