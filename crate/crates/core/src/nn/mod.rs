//! Two-layer feed-forward ReLU approximator of the reaction rate.
//!
//! `mu(x, s) = w2 . relu(W1 (x, s) + b1) + b2` with a linear output, so the
//! learned rate is piecewise linear and unbounded.

mod checkpoint;
mod init;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use init::{init_schemes, mlp_init, GroupInit, InitScheme, InitSpec, Sign};

use crate::error::{config_err, contract_err, Error, Result};

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Network weights stored flat in checkpoint order: `w1` (hidden x 2, row
/// major), `b1` (hidden), `w2` (hidden), `b2` (1).
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    hidden: usize,
    values: Vec<f64>,
}

/// Partial derivatives of a scalar loss, laid out exactly like [`MlpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    hidden: usize,
    values: Vec<f64>,
}

/// Result of [`MlpParams::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBackward {
    pub grads: MlpGrads,
    pub grad_x: f64,
    pub grad_s: f64,
}

pub const fn param_count(hidden: usize) -> usize {
    4 * hidden + 1
}

impl MlpParams {
    pub fn zeros(hidden: usize) -> Result<Self> {
        if hidden == 0 {
            return config_err("hidden width must be at least 1");
        }
        Ok(Self {
            hidden,
            values: vec![0.0; param_count(hidden)],
        })
    }

    pub fn from_flat(hidden: usize, values: Vec<f64>) -> Result<Self> {
        if hidden == 0 {
            return config_err("hidden width must be at least 1");
        }
        if values.len() != param_count(hidden) {
            return contract_err(format!(
                "expected {} parameters for hidden width {hidden}, got {}",
                param_count(hidden),
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { hidden, values })
    }

    pub fn from_parts(w1: &[[f64; 2]], b1: &[f64], w2: &[f64], b2: f64) -> Result<Self> {
        let hidden = w1.len();
        if b1.len() != hidden || w2.len() != hidden {
            return contract_err(format!(
                "inconsistent shapes: w1 has {hidden} rows, b1 {}, w2 {}",
                b1.len(),
                w2.len()
            ));
        }
        let mut values = Vec::with_capacity(param_count(hidden));
        values.extend(w1.iter().flatten());
        values.extend_from_slice(b1);
        values.extend_from_slice(w2);
        values.push(b2);
        Self::from_flat(hidden, values)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mutable flat view; callers are responsible for keeping entries finite.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn w1(&self, j: usize) -> [f64; 2] {
        [self.values[2 * j], self.values[2 * j + 1]]
    }

    pub fn b1(&self) -> &[f64] {
        &self.values[2 * self.hidden..3 * self.hidden]
    }

    pub fn w2(&self) -> &[f64] {
        &self.values[3 * self.hidden..4 * self.hidden]
    }

    pub fn b2(&self) -> f64 {
        self.values[4 * self.hidden]
    }

    #[inline]
    fn preactivation(&self, j: usize, x: f64, s: f64) -> f64 {
        let h = self.hidden;
        self.values[2 * j] * x + self.values[2 * j + 1] * s + self.values[2 * h + j]
    }

    /// Network output without finiteness checks; used inside the unrolled loops
    /// where the caller validates the integrated state instead.
    #[inline]
    pub fn eval(&self, x: f64, s: f64) -> f64 {
        let h = self.hidden;
        let mut out = self.values[4 * h];
        for j in 0..h {
            out += self.values[3 * h + j] * relu(self.preactivation(j, x, s));
        }
        out
    }

    /// Smallest hidden preactivation magnitude at `(x, s)`; distance to the
    /// nearest ReLU kink.
    pub fn kink_margin(&self, x: f64, s: f64) -> f64 {
        (0..self.hidden)
            .map(|j| self.preactivation(j, x, s).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn forward(&self, x: f64, s: f64) -> Result<f64> {
        if !x.is_finite() || !s.is_finite() {
            return Err(Error::NonFinite("network input"));
        }
        let out = self.eval(x, s);
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite("network output"))
        }
    }

    /// Exact reverse pass of `upstream * forward(x, s)`. The ReLU derivative at
    /// exactly zero is taken as 0.
    pub fn backward(&self, x: f64, s: f64, upstream: f64) -> Result<MlpBackward> {
        if !x.is_finite() || !s.is_finite() || !upstream.is_finite() {
            return Err(Error::NonFinite("network backward input"));
        }
        let mut grads = MlpGrads::zeros_like(self);
        let (grad_x, grad_s) = self.backward_into(x, s, upstream, &mut grads);
        if grads.values.iter().any(|g| !g.is_finite()) || !grad_x.is_finite() || !grad_s.is_finite()
        {
            return Err(Error::NonFinite("network gradient"));
        }
        Ok(MlpBackward {
            grads,
            grad_x,
            grad_s,
        })
    }

    /// Accumulate the parameter gradient of `upstream * forward(x, s)` into
    /// `acc` and return the input partials `(d/dx, d/ds)`.
    #[inline]
    pub fn backward_into(&self, x: f64, s: f64, upstream: f64, acc: &mut MlpGrads) -> (f64, f64) {
        debug_assert_eq!(acc.hidden, self.hidden);
        let h = self.hidden;
        let g = &mut acc.values;
        let mut grad_x = 0.0;
        let mut grad_s = 0.0;
        for j in 0..h {
            let pre = self.preactivation(j, x, s);
            if pre > 0.0 {
                g[3 * h + j] += upstream * pre;
                let d_pre = upstream * self.values[3 * h + j];
                g[2 * j] += d_pre * x;
                g[2 * j + 1] += d_pre * s;
                g[2 * h + j] += d_pre;
                grad_x += d_pre * self.values[2 * j];
                grad_s += d_pre * self.values[2 * j + 1];
            }
        }
        g[4 * h] += upstream;
        (grad_x, grad_s)
    }
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            hidden: p.hidden,
            values: vec![0.0; p.values.len()],
        }
    }

    pub fn from_flat(hidden: usize, values: Vec<f64>) -> Result<Self> {
        if hidden == 0 || values.len() != param_count(hidden) {
            return contract_err("gradient shape does not match hidden width");
        }
        Ok(Self { hidden, values })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn matches(&self, p: &MlpParams) -> bool {
        self.hidden == p.hidden && self.values.len() == p.values.len()
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|g| *g *= c);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }
}
