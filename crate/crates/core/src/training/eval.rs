use std::collections::BTreeSet;

use rayon::prelude::*;

use super::TrainConfig;
use crate::adjoint::{
    batch_loss, make_mask, trajectory_loss, LearnedRate, LossReport, RateOptions, XS_DENSE,
};
use crate::datagen::Example;
use crate::dynamics::{haldane_mu, integrate, BioreactorConfig, RateModel, Trajectory};
use crate::error::{config_err, contract_err, Result};
use crate::nn::MlpParams;

/// Test-time loss. Both channels are observed at every step whatever mask
/// the configuration trained with.
pub fn evaluate(
    params: &MlpParams,
    split: &[Example],
    cfg: &BioreactorConfig,
    tc: &TrainConfig,
) -> Result<LossReport> {
    if split.is_empty() {
        return contract_err("cannot evaluate an empty split");
    }
    let mask = make_mask(XS_DENSE, cfg.n_steps)?;
    batch_loss(params, split, &mask, cfg, tc.rate_options())
}

/// Dense-mask loss of every sample, in split order.
pub fn evaluate_per_sample(
    params: &MlpParams,
    split: &[Example],
    cfg: &BioreactorConfig,
    opts: RateOptions,
) -> Result<Vec<LossReport>> {
    let mask = make_mask(XS_DENSE, cfg.n_steps)?;
    split
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let pred = predict(params, ex, cfg, opts).map_err(|e| e.in_sample(i))?;
            trajectory_loss(&pred, &ex.truth, &mask)
        })
        .collect()
}

/// Trajectory of the learned model from the example's initial state and feed.
pub fn predict(
    params: &MlpParams,
    ex: &Example,
    cfg: &BioreactorConfig,
    opts: RateOptions,
) -> Result<Trajectory> {
    integrate(
        ex.sample.x0,
        &ex.sample.s_in,
        &LearnedRate::new(params, opts),
        cfg,
    )
}

/// A finite set of `(X, S)` points on which learned and true rates are compared.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    points: Vec<(f64, f64)>,
}

impl Region {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return config_err("region has no points");
        }
        if points.iter().any(|(x, s)| !x.is_finite() || !s.is_finite()) {
            return config_err("region points must be finite");
        }
        Ok(Self { points })
    }

    /// Full `nx` by `ns` lattice including the corners.
    pub fn grid(x: (f64, f64), s: (f64, f64), nx: usize, ns: usize) -> Result<Self> {
        if nx < 2 || ns < 2 || !(x.1 > x.0) || !(s.1 > s.0) {
            return config_err("grid needs at least 2 points per axis over a non-empty range");
        }
        let at =
            |(lo, hi): (f64, f64), i: usize, n: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let mut points = Vec::with_capacity(nx * ns);
        for i in 0..nx {
            for j in 0..ns {
                points.push((at(x, i, nx), at(s, j, ns)));
            }
        }
        Self::new(points)
    }

    /// Lattice nodes of an `nx` by `ns` partition of the box spanned by the
    /// origin and every state some trajectory passes through. A node is kept
    /// when it is a corner of a cell containing at least one state.
    pub fn visited<'a>(
        trajectories: impl IntoIterator<Item = &'a Trajectory>,
        nx: usize,
        ns: usize,
    ) -> Result<Self> {
        if nx == 0 || ns == 0 {
            return config_err("occupancy grid needs at least one cell per axis");
        }
        let pts: Vec<(f64, f64)> = trajectories
            .into_iter()
            .flat_map(|t| t.states().iter().map(|st| (st.x, st.s)))
            .collect();
        if pts.is_empty() {
            return config_err("no trajectories to build a region from");
        }
        let bounds = |f: fn(&(f64, f64)) -> f64| {
            pts.iter()
                .map(f)
                .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)))
        };
        let (x_lo, x_hi) = bounds(|p| p.0);
        let (s_lo, s_hi) = bounds(|p| p.1);
        if !(x_hi > x_lo) || !(s_hi > s_lo) {
            return config_err("visited states span no area");
        }
        let cell = |v: f64, lo: f64, hi: f64, n: usize| {
            (((v - lo) / (hi - lo) * n as f64) as usize).min(n - 1)
        };
        let node = |i: usize, lo: f64, hi: f64, n: usize| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        };
        let mut nodes = BTreeSet::new();
        for &(x, s) in &pts {
            let (i, j) = (cell(x, x_lo, x_hi, nx), cell(s, s_lo, s_hi, ns));
            for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                nodes.insert((i + di, j + dj));
            }
        }
        Self::new(
            nodes
                .into_iter()
                .map(|(i, j)| (node(i, x_lo, x_hi, nx), node(j, s_lo, s_hi, ns)))
                .collect(),
        )
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

/// Root-mean-square difference between the learned rate and the Haldane
/// law over the region.
pub fn mu_surface_error(
    params: &MlpParams,
    cfg: &BioreactorConfig,
    region: &Region,
    opts: RateOptions,
) -> f64 {
    let rate = LearnedRate::new(params, opts);
    let sum: f64 = region
        .points
        .iter()
        .map(|&(x, s)| {
            let d = rate.rate(x, s) - haldane_mu(s, cfg);
            d * d
        })
        .sum();
    (sum / region.points.len() as f64).sqrt()
}
