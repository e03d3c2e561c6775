use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use graybox::datagen::GenConfig;
use graybox::dynamics::BioreactorConfig;
use graybox::nn::InitSpec;
use graybox::training::TrainConfig;

use crate::args::CommonArgs;

/// Everything a command needs, with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub seed: u64,
    pub dynamics: BioreactorConfig,
    pub generate: GenConfig,
    pub train: TrainConfig,
    pub init: InitSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub out: PathBuf,
    pub corpus_seed: Option<u64>,
    pub inputs: Inputs,
    pub config: RunConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub init_checkpoint: Option<PathBuf>,
    pub stage2_only: bool,
}

pub const MANIFEST_FILE: &str = "manifest.toml";

impl RunManifest {
    pub fn new(
        command: &str,
        out: &Path,
        corpus_seed: Option<u64>,
        inputs: Inputs,
        config: RunConfig,
    ) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            out: out.to_owned(),
            corpus_seed,
            inputs,
            config,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let text = toml::to_string(self).context("serializing manifest")?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Overlay `top` onto `base`, recursing into tables.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Defaults overlaid with a config file. A manifest is accepted too: its
/// `[config]` table is used as is. In a partial file `clip_norm = "none"`
/// turns clipping off.
pub fn load(file: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = file else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut top: toml::Table =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let invalid = || format!("invalid configuration in {}", path.display());
    // Manifests hold a complete configuration; absent optional keys there
    // mean "off", not "default".
    if let Some(toml::Value::Table(inner)) = top.remove("config") {
        return toml::Value::Table(inner).try_into().with_context(invalid);
    }
    let mut base = toml::Table::try_from(RunConfig::default()).context("serializing defaults")?;
    let clip_off = top
        .get("train")
        .and_then(|t| t.get("clip_norm"))
        .and_then(|v| v.as_str())
        .is_some_and(|s| parse_clip(s).ok() == Some(None));
    if clip_off {
        if let Some(toml::Value::Table(t)) = top.get_mut("train") {
            t.remove("clip_norm");
        }
        if let Some(toml::Value::Table(t)) = base.get_mut("train") {
            t.remove("clip_norm");
        }
    }
    let seed = top.get("seed").and_then(|v| v.as_integer());
    let has = |section: &str| top.get(section).and_then(|t| t.get("seed")).is_some();
    let (train_seed, init_seed) = (has("train"), has("init"));
    merge(&mut base, top);
    let mut cfg: RunConfig = base.try_into().with_context(invalid)?;
    // A top-level seed drives every seeded component unless a section sets its own.
    if let Some(seed) = seed {
        let seed = u64::try_from(seed).context("seed must be non-negative")?;
        if !train_seed {
            cfg.train.seed = seed;
        }
        if !init_seed {
            cfg.init.seed = seed;
        }
    }
    Ok(cfg)
}

/// Apply command-line overrides on top of the loaded configuration.
pub fn apply_flags(cfg: &mut RunConfig, a: &CommonArgs) -> Result<()> {
    if let Some(seed) = a.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
        cfg.init.seed = seed;
    }
    if let Some(n) = a.samples {
        cfg.generate.train = n;
        cfg.generate.validation = n;
        cfg.generate.test = n;
    }
    if let Some(n) = a.steps {
        cfg.dynamics.n_steps = n;
    }
    if let Some(dt) = a.dt {
        cfg.dynamics.dt = dt;
    }
    if let Some(h) = a.hidden {
        cfg.train.hidden = h;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(m) = &a.mask {
        cfg.train.mask_mode = m.clone();
    }
    if let Some(f) = a.coarsen {
        cfg.train.stage1_coarsen_factor = f;
    }
    if let Some(e) = a.epochs_max {
        cfg.train.epochs_max = e;
    }
    if let Some(c) = &a.clip_norm {
        cfg.train.clip_norm = parse_clip(c)?;
    }
    Ok(())
}

fn parse_clip(text: &str) -> Result<Option<f64>> {
    if text.eq_ignore_ascii_case("none") || text.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    match text.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(Some(v)),
        _ => bail!("--clip-norm expects a positive number or `none`, got `{text}`"),
    }
}
