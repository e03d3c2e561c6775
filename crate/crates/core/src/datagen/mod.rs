//! Seeded synthetic corpora: random initial states, random-walk feed
//! concentrations, Haldane ground truth, and temporal coarsening.
//!
//! Every sample draws from its own ChaCha stream keyed by `(seed, split,
//! index)`, so corpora are bit-reproducible at any thread count and the
//! splits are independent of each other's sizes.

mod io;

pub use io::{
    corpus_stats, read_corpus, write_corpus, write_stats_csv, StepStats, CORPUS_MAGIC,
    CORPUS_VERSION, STATS_CSV_HEADER,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, BioreactorConfig, State, Trajectory};
use crate::error::{config_err, contract_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub x0_var: f64,
    pub s0_var: f64,
    pub v0_var: f64,
    pub v0_mean: f64,
    /// Floor applied to the initial volume draw.
    pub v_min: f64,
    pub s_in0_mean: f64,
    pub s_in0_var: f64,
    /// Variance of each random-walk increment of the feed concentration.
    pub s_in_step_var: f64,
    /// Reflect the feed walk at zero (absolute value after every increment).
    pub reflect_s_in: bool,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Largest tolerated fraction of redrawn samples before the dynamics
    /// configuration is declared unstable.
    pub max_reject_frac: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            x0_var: 0.1,
            s0_var: 0.01,
            v0_var: 2.0,
            v0_mean: 5.0,
            v_min: 0.5,
            s_in0_mean: 1.0,
            s_in0_var: 0.04,
            s_in_step_var: 0.01,
            reflect_s_in: true,
            train: 1024,
            validation: 1024,
            test: 1024,
            max_reject_frac: 0.01,
        }
    }
}

impl GenConfig {
    pub fn with_sizes(mut self, train: usize, validation: usize, test: usize) -> Self {
        self.train = train;
        self.validation = validation;
        self.test = test;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("x0_var", self.x0_var),
            ("s0_var", self.s0_var),
            ("v0_var", self.v0_var),
            ("s_in0_var", self.s_in0_var),
            ("s_in_step_var", self.s_in_step_var),
            ("max_reject_frac", self.max_reject_frac),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return config_err(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return config_err(format!("v_min must be > 0, got {}", self.v_min));
        }
        if !self.v0_mean.is_finite() || !self.s_in0_mean.is_finite() {
            return config_err("distribution means must be finite");
        }
        Ok(())
    }

    fn size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    fn tag(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Validation => 1,
            Split::Test => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Initial state plus the feed concentration series that drives it.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x0: State,
    pub s_in: Vec<f64>,
}

/// A sample with its ground-truth trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sample: Sample,
    pub truth: Trajectory,
}

impl Example {
    pub fn n_steps(&self) -> usize {
        self.sample.s_in.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub seed: u64,
    pub cfg: BioreactorConfig,
    pub gen: GenConfig,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
    /// Samples redrawn because their ground truth blew up.
    pub rejections: usize,
}

impl Corpus {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Every split coarsened by `factor`, with the configuration's step and
    /// horizon adjusted to match.
    pub fn coarsened(&self, factor: usize) -> Result<Corpus> {
        let cfg = coarsen_config(&self.cfg, factor)?;
        let map = |xs: &[Example]| {
            xs.iter()
                .map(|e| coarsen(e, factor))
                .collect::<Result<Vec<_>>>()
        };
        Ok(Corpus {
            seed: self.seed,
            cfg,
            gen: self.gen.clone(),
            train: map(&self.train)?,
            validation: map(&self.validation)?,
            test: map(&self.test)?,
            rejections: self.rejections,
        })
    }
}

pub fn sample_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((split.tag() << 32) | index as u64);
    rng
}

fn normal(mean: f64, var: f64) -> Normal<f64> {
    Normal::new(mean, var.sqrt()).expect("variance validated as finite and >= 0")
}

/// Initial `(X0, S0, V0)` before the positivity policy is applied.
pub fn draw_initial_raw<R: Rng + ?Sized>(rng: &mut R, gen: &GenConfig) -> [f64; 3] {
    [
        normal(0.0, gen.x0_var).sample(rng),
        normal(0.0, gen.s0_var).sample(rng),
        normal(gen.v0_mean, gen.v0_var).sample(rng),
    ]
}

/// Reflect X0 and S0 to non-negative values and floor V0 at `v_min`.
pub fn apply_positivity(raw: [f64; 3], gen: &GenConfig) -> State {
    State::new(raw[0].abs(), raw[1].abs(), raw[2].max(gen.v_min))
}

pub fn sample_initial_state<R: Rng + ?Sized>(rng: &mut R, gen: &GenConfig) -> State {
    apply_positivity(draw_initial_raw(rng, gen), gen)
}

/// Random-walk feed concentration of length `n_steps`.
pub fn sample_sin_series<R: Rng + ?Sized>(
    rng: &mut R,
    n_steps: usize,
    gen: &GenConfig,
) -> Vec<f64> {
    let reflect = |v: f64| if gen.reflect_s_in { v.abs() } else { v };
    let step = normal(0.0, gen.s_in_step_var);
    let mut out = Vec::with_capacity(n_steps);
    let mut cur = reflect(normal(gen.s_in0_mean, gen.s_in0_var).sample(rng));
    for k in 0..n_steps {
        if k > 0 {
            cur = reflect(cur + step.sample(rng));
        }
        out.push(cur);
    }
    out
}

// Redraws allowed for a single sample before giving up on the configuration.
const MAX_ATTEMPTS: usize = 64;

fn generate_example(
    seed: u64,
    split: Split,
    index: usize,
    cfg: &BioreactorConfig,
    gen: &GenConfig,
) -> Result<(Example, usize)> {
    let mut rng = sample_rng(seed, split, index);
    let truth_rate = cfg.haldane();
    for rejected in 0..MAX_ATTEMPTS {
        let x0 = sample_initial_state(&mut rng, gen);
        let s_in = sample_sin_series(&mut rng, cfg.n_steps, gen);
        match integrate(x0, &s_in, &truth_rate, cfg) {
            Ok(truth) => {
                return Ok((
                    Example {
                        sample: Sample { x0, s_in },
                        truth,
                    },
                    rejected,
                ))
            }
            Err(e) if e.is_blowup() => continue,
            Err(e) => return Err(e),
        }
    }
    config_err(format!(
        "{} sample {index}: ground truth blew up {MAX_ATTEMPTS} times in a row",
        split.name()
    ))
}

pub fn generate_split(
    seed: u64,
    split: Split,
    cfg: &BioreactorConfig,
    gen: &GenConfig,
) -> Result<(Vec<Example>, usize)> {
    let results: Vec<Result<(Example, usize)>> = (0..gen.size(split))
        .into_par_iter()
        .map(|i| generate_example(seed, split, i, cfg, gen))
        .collect();
    let mut examples = Vec::with_capacity(results.len());
    let mut rejections = 0;
    for r in results {
        let (ex, rej) = r?;
        examples.push(ex);
        rejections += rej;
    }
    Ok((examples, rejections))
}

pub fn generate_corpus(seed: u64, cfg: &BioreactorConfig, gen: &GenConfig) -> Result<Corpus> {
    cfg.validate()?;
    gen.validate()?;
    let (train, r0) = generate_split(seed, Split::Train, cfg, gen)?;
    let (validation, r1) = generate_split(seed, Split::Validation, cfg, gen)?;
    let (test, r2) = generate_split(seed, Split::Test, cfg, gen)?;
    let rejections = r0 + r1 + r2;
    let total = gen.train + gen.validation + gen.test;
    if rejections as f64 > gen.max_reject_frac * total as f64 {
        return Err(Error::Config(format!(
            "dynamics configuration is unstable: {rejections} of {total} ground truths blew up"
        )));
    }
    Ok(Corpus {
        seed,
        cfg: cfg.clone(),
        gen: gen.clone(),
        train,
        validation,
        test,
        rejections,
    })
}

fn check_factor(n_steps: usize, factor: usize) -> Result<()> {
    if factor == 0 || !n_steps.is_multiple_of(factor) {
        return contract_err(format!(
            "coarsening factor {factor} must be >= 1 and divide {n_steps} steps"
        ));
    }
    Ok(())
}

pub fn coarsen_config(cfg: &BioreactorConfig, factor: usize) -> Result<BioreactorConfig> {
    check_factor(cfg.n_steps, factor)?;
    Ok(BioreactorConfig {
        dt: cfg.dt * factor as f64,
        n_steps: cfg.n_steps / factor,
        ..cfg.clone()
    })
}

/// Subsample inputs and ground truth at stride `factor`, keeping both
/// endpoints of the time interval.
pub fn coarsen(ex: &Example, factor: usize) -> Result<Example> {
    check_factor(ex.n_steps(), factor)?;
    let s_in: Vec<f64> = ex.sample.s_in.iter().copied().step_by(factor).collect();
    let states = ex.truth.states().iter().copied().step_by(factor).collect();
    let truth = Trajectory::new(states, s_in.clone())?;
    Ok(Example {
        sample: Sample {
            x0: ex.sample.x0,
            s_in,
        },
        truth,
    })
}
