//! Parameter initialization. Each parameter group (`w1`, `b1`, `w2`, `b2`)
//! names a scheme from [`init_schemes`]; the two numbers `a` and `b` are
//! interpreted by the scheme:
//!
//! | scheme        | draw                                         |
//! |---------------|----------------------------------------------|
//! | `uniform`     | `U(-a, a)`                                   |
//! | `normal`      | `N(0, a^2)`                                  |
//! | `he_normal`   | `N(0, a^2 * 2 / fan_in)`                     |
//! | `log_uniform` | `exp(U(ln a, ln b))`, then sign              |
//! | `log_normal`  | `exp(N(ln a, b^2))` (median `a`), then sign  |

use std::sync::LazyLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{param_count, MlpParams};
use crate::error::{config_err, Result};
use crate::registry::Registry;

/// Sign applied to strictly positive draws of the log schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    #[default]
    Positive,
    Negative,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupInit {
    pub scheme: String,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub sign: Sign,
}

impl GroupInit {
    pub fn new(scheme: &str, a: f64, b: f64) -> Self {
        Self {
            scheme: scheme.to_owned(),
            a,
            b,
            sign: Sign::Positive,
        }
    }

    pub fn zero() -> Self {
        Self::new("uniform", 0.0, 0.0)
    }

    pub fn with_sign(mut self, sign: Sign) -> Self {
        self.sign = sign;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub w1: GroupInit,
    pub b1: GroupInit,
    pub w2: GroupInit,
    pub b2: GroupInit,
    pub seed: u64,
}

impl Default for InitSpec {
    /// He-normal weights, zero biases.
    fn default() -> Self {
        Self {
            w1: GroupInit::new("he_normal", 1.0, 0.0),
            b1: GroupInit::zero(),
            w2: GroupInit::new("he_normal", 1.0, 0.0),
            b2: GroupInit::zero(),
            seed: 0,
        }
    }
}

impl InitSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let reg = init_schemes();
        for g in [&self.w1, &self.b1, &self.w2, &self.b2] {
            reg.get(&g.scheme)?.validate(g)?;
        }
        Ok(())
    }
}

pub trait InitScheme: Send + Sync {
    fn validate(&self, g: &GroupInit) -> Result<()>;
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, fan_in: usize) -> f64;
}

struct Uniform;
struct Gaussian;
struct HeNormal;
struct LogUniform;
struct LogNormal;

fn nonneg_scale(g: &GroupInit) -> Result<()> {
    if g.a.is_finite() && g.a >= 0.0 {
        Ok(())
    } else {
        config_err(format!(
            "{}: scale must be finite and >= 0, got {}",
            g.scheme, g.a
        ))
    }
}

fn signed(rng: &mut dyn RngCore, sign: Sign, magnitude: f64) -> f64 {
    match sign {
        Sign::Positive => magnitude,
        Sign::Negative => -magnitude,
        Sign::Random => {
            if rng.random::<bool>() {
                magnitude
            } else {
                -magnitude
            }
        }
    }
}

impl InitScheme for Uniform {
    fn validate(&self, g: &GroupInit) -> Result<()> {
        nonneg_scale(g)
    }
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, _fan_in: usize) -> f64 {
        if g.a == 0.0 {
            return 0.0;
        }
        rng.random_range(-g.a..g.a)
    }
}

impl InitScheme for Gaussian {
    fn validate(&self, g: &GroupInit) -> Result<()> {
        nonneg_scale(g)
    }
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, _fan_in: usize) -> f64 {
        Normal::new(0.0, g.a).map(|d| d.sample(rng)).unwrap_or(0.0)
    }
}

impl InitScheme for HeNormal {
    fn validate(&self, g: &GroupInit) -> Result<()> {
        nonneg_scale(g)
    }
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, fan_in: usize) -> f64 {
        let std = g.a * (2.0 / fan_in as f64).sqrt();
        Normal::new(0.0, std).map(|d| d.sample(rng)).unwrap_or(0.0)
    }
}

impl InitScheme for LogUniform {
    fn validate(&self, g: &GroupInit) -> Result<()> {
        if g.a > 0.0 && g.b >= g.a && g.b.is_finite() {
            Ok(())
        } else {
            config_err(format!(
                "log_uniform needs 0 < a <= b < inf, got [{}, {}]",
                g.a, g.b
            ))
        }
    }
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, _fan_in: usize) -> f64 {
        let (lo, hi) = (g.a.ln(), g.b.ln());
        let u = if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        };
        signed(rng, g.sign, u.exp())
    }
}

impl InitScheme for LogNormal {
    fn validate(&self, g: &GroupInit) -> Result<()> {
        if g.a > 0.0 && g.a.is_finite() && g.b >= 0.0 && g.b.is_finite() {
            Ok(())
        } else {
            config_err(format!(
                "log_normal needs median a > 0 and sigma b >= 0, got ({}, {})",
                g.a, g.b
            ))
        }
    }
    fn draw(&self, rng: &mut dyn RngCore, g: &GroupInit, _fan_in: usize) -> f64 {
        let z = Normal::new(g.a.ln(), g.b)
            .map(|d| d.sample(rng))
            .unwrap_or(g.a.ln());
        signed(rng, g.sign, z.exp())
    }
}

static SCHEMES: LazyLock<Registry<dyn InitScheme>> = LazyLock::new(|| {
    let mut reg: Registry<dyn InitScheme> = Registry::new("init scheme");
    let builtins: [(&str, Box<dyn InitScheme>); 5] = [
        ("uniform", Box::new(Uniform)),
        ("normal", Box::new(Gaussian)),
        ("he_normal", Box::new(HeNormal)),
        ("log_uniform", Box::new(LogUniform)),
        ("log_normal", Box::new(LogNormal)),
    ];
    for (name, scheme) in builtins {
        reg.register(name, scheme)
            .expect("builtin names are unique");
    }
    reg
});

pub fn init_schemes() -> &'static Registry<dyn InitScheme> {
    &SCHEMES
}

/// Draw a fresh parameter set. Groups are drawn in checkpoint order from one
/// seeded stream, so the result is a pure function of `(hidden, spec)`.
pub fn mlp_init(hidden: usize, spec: &InitSpec) -> Result<MlpParams> {
    if hidden == 0 {
        return config_err("hidden width must be at least 1");
    }
    spec.validate()?;
    let reg = init_schemes();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = Vec::with_capacity(param_count(hidden));
    let groups = [
        (&spec.w1, 2 * hidden, 2),
        (&spec.b1, hidden, 2),
        (&spec.w2, hidden, hidden),
        (&spec.b2, 1, hidden),
    ];
    for (g, count, fan_in) in groups {
        let scheme = reg.get(&g.scheme)?;
        for _ in 0..count {
            values.push(scheme.draw(&mut rng, g, fan_in));
        }
    }
    MlpParams::from_flat(hidden, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_gives_zero_params() {
        let z = GroupInit::new("uniform", 0.0, 0.0);
        let spec = InitSpec {
            w1: z.clone(),
            b1: z.clone(),
            w2: z.clone(),
            b2: z,
            seed: 9,
        };
        let p = mlp_init(8, &spec).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_params() {
        let spec = InitSpec::default().with_seed(42);
        let a = mlp_init(16, &spec).unwrap();
        let b = mlp_init(16, &spec).unwrap();
        let bits = |p: &MlpParams| p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = mlp_init(16, &spec.clone().with_seed(43)).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn default_init_shapes() {
        let p = mlp_init(16, &InitSpec::default()).unwrap();
        assert_eq!(p.len(), 65);
        assert!(p.b1().iter().all(|&b| b == 0.0));
        assert_eq!(p.b2(), 0.0);
        assert!(p.w2().iter().any(|&w| w != 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(mlp_init(0, &InitSpec::default()).is_err());
        let mut spec = InitSpec {
            b1: GroupInit::new("log_uniform", 0.0, 1.0),
            ..InitSpec::default()
        };
        assert!(mlp_init(4, &spec).is_err());
        spec.b1 = GroupInit::new("normal", -1.0, 0.0);
        assert!(mlp_init(4, &spec).is_err());
        spec.b1 = GroupInit::new("xavier", 1.0, 0.0);
        assert!(mlp_init(4, &spec).is_err());
    }

    #[test]
    fn log_schemes_respect_sign_policy() {
        let mut spec = InitSpec {
            b1: GroupInit::new("log_normal", 0.1, 1.0),
            ..InitSpec::default()
        };
        let p = mlp_init(64, &spec).unwrap();
        assert!(p.b1().iter().all(|&b| b > 0.0));
        spec.b1 = GroupInit::new("log_uniform", 1e-3, 1.0).with_sign(Sign::Negative);
        let p = mlp_init(64, &spec).unwrap();
        assert!(p
            .b1()
            .iter()
            .all(|&b| (-1.0..0.0).contains(&b) && b <= -1e-3));
        spec.b1 = GroupInit::new("log_uniform", 1e-3, 1.0).with_sign(Sign::Random);
        let p = mlp_init(64, &spec).unwrap();
        assert!(p.b1().iter().any(|&b| b < 0.0) && p.b1().iter().any(|&b| b > 0.0));
    }

    #[test]
    fn log_uniform_biases_pass_ks_test() {
        // Pool b1 draws from many seeds; log|b| should be uniform on
        // [ln 1e-3, ln 1].
        let mut spec = InitSpec {
            b1: GroupInit::new("log_uniform", 1e-3, 1.0),
            ..InitSpec::default()
        };
        let mut logs = Vec::with_capacity(10_048);
        let mut seed = 0;
        while logs.len() < 10_000 {
            spec.seed = seed;
            let p = mlp_init(64, &spec).unwrap();
            logs.extend(p.b1().iter().map(|b| b.abs().ln()));
            seed += 1;
        }
        logs.truncate(10_000);
        logs.sort_by(f64::total_cmp);
        let (lo, hi) = (1e-3f64.ln(), 0.0);
        let n = logs.len() as f64;
        let d = logs
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = (v - lo) / (hi - lo);
                (cdf - i as f64 / n)
                    .abs()
                    .max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        // Two-sided asymptotic critical value at alpha = 0.01.
        let critical = (-(0.005f64).ln() / 2.0).sqrt() / n.sqrt();
        assert!(d < critical, "KS statistic {d} >= {critical}");
    }
}
