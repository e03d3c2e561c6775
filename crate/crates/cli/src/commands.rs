use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use graybox::adjoint::LearnedRate;
use graybox::datagen::{
    corpus_stats, generate_corpus, read_corpus, write_corpus, write_stats_csv, Corpus, Split,
};
use graybox::dynamics::{haldane_mu, RateModel, Trajectory};
use graybox::fmt::f64_text;
use graybox::nn::{mlp_init, read_checkpoint, write_checkpoint, MlpParams};
use graybox::parallel::pool_from_env;
use graybox::training::{
    evaluate, evaluate_per_sample, mu_surface_error, predict, train_full_resolution,
    train_two_stage, train_two_stage_from, EpochRecord, Region, StageSummary, TrainObserver,
};

use crate::args::{CommonArgs, EvalArgs, ExportMuArgs, GenerateArgs, TrainArgs};
use crate::config::{apply_flags, load, Inputs, RunConfig, RunManifest};

pub const CORPUS_FILE: &str = "corpus.bin";
pub const STATS_FILE: &str = "stats.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const TERMINATIONS_FILE: &str = "terminations.txt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const PER_SAMPLE_FILE: &str = "per_sample.csv";
pub const MU_GRID_FILE: &str = "mu_grid.csv";
pub const MU_RMSE_FILE: &str = "mu_rmse.txt";

fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = load(common.config.as_deref())?;
    apply_flags(&mut cfg, common)?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_with(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))
}

fn open_corpus(path: &Path) -> Result<Corpus> {
    let f = File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    read_corpus(BufReader::new(f)).with_context(|| format!("reading corpus {}", path.display()))
}

fn open_checkpoint(path: &Path) -> Result<MlpParams> {
    let f = File::open(path).with_context(|| format!("opening checkpoint {}", path.display()))?;
    read_checkpoint(BufReader::new(f))
        .with_context(|| format!("reading checkpoint {}", path.display()))
}

fn save_checkpoint(path: &Path, p: &MlpParams) -> Result<()> {
    write_with(path, |w| Ok(write_checkpoint(w, p)?))
}

/// Take the corpus's own dynamics and generation settings so the manifest
/// describes the data actually used.
fn adopt_corpus(cfg: &mut RunConfig, corpus: &Corpus) {
    cfg.dynamics = corpus.cfg.clone();
    cfg.generate = corpus.gen.clone();
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let cfg = resolve(&a.common)?;
    cfg.dynamics.validate()?;
    cfg.generate.validate()?;
    if let Some(f) = a.coarsen_check {
        if f == 0 || cfg.dynamics.n_steps % f != 0 {
            bail!(
                "coarsening factor {f} does not divide {} steps",
                cfg.dynamics.n_steps
            );
        }
    }
    let out = &a.common.out;
    RunManifest::new(
        "generate",
        out,
        Some(cfg.seed),
        Inputs::default(),
        cfg.clone(),
    )
    .write(out)?;

    let corpus =
        pool_from_env()?.install(|| generate_corpus(cfg.seed, &cfg.dynamics, &cfg.generate))?;
    write_with(&out.join(CORPUS_FILE), |w| Ok(write_corpus(w, &corpus)?))?;
    let stats = corpus_stats(corpus.split(Split::Test));
    write_with(&out.join(STATS_FILE), |w| Ok(write_stats_csv(w, &stats)?))?;
    println!(
        "train={} validation={} test={} steps={} rejections={}",
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len(),
        corpus.cfg.n_steps,
        corpus.rejections
    );
    Ok(())
}

/// Writes stage-end and best-validation checkpoints and prints progress.
struct CheckpointWriter {
    out: PathBuf,
    best: Option<(u8, f64)>,
}

impl CheckpointWriter {
    fn save(&self, name: String, p: &MlpParams) -> graybox::Result<()> {
        let mut w = BufWriter::new(File::create(self.out.join(name))?);
        write_checkpoint(&mut w, p)?;
        w.flush()?;
        Ok(())
    }
}

impl TrainObserver for CheckpointWriter {
    fn on_epoch(&mut self, r: &EpochRecord, p: &MlpParams) -> graybox::Result<()> {
        let val = r.validation.per_sample_per_step;
        let improved = match self.best {
            Some((stage, best)) if stage == r.stage => val < best,
            _ => true,
        };
        if improved {
            self.best = Some((r.stage, val));
            self.save(format!("stage{}_best.ckpt", r.stage), p)?;
        }
        if r.epoch.is_multiple_of(100) {
            eprintln!(
                "stage {} epoch {} train_ratio {:.4} val_ratio {:.4}",
                r.stage, r.epoch, r.train.loss_ratio, r.validation.loss_ratio
            );
        }
        Ok(())
    }

    fn on_stage_end(&mut self, s: &StageSummary, p: &MlpParams) -> graybox::Result<()> {
        self.save(format!("stage{}.ckpt", s.stage), p)
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    let corpus = open_corpus(&a.corpus)?;
    adopt_corpus(&mut cfg, &corpus);
    cfg.train.validate()?;
    cfg.init.validate()?;
    let init = a
        .init_checkpoint
        .as_deref()
        .map(open_checkpoint)
        .transpose()?;
    if let Some(p) = &init {
        cfg.train.hidden = p.hidden();
    }
    let out = &a.common.out;
    let inputs = Inputs {
        corpus: Some(a.corpus.clone()),
        init_checkpoint: a.init_checkpoint.clone(),
        stage2_only: a.stage2_only,
        ..Inputs::default()
    };
    RunManifest::new("train", out, Some(corpus.seed), inputs, cfg.clone()).write(out)?;

    let mut observer = CheckpointWriter {
        out: out.clone(),
        best: None,
    };
    let tc = &cfg.train;
    let outcome = pool_from_env()?.install(|| match (init, a.stage2_only) {
        (Some(p), true) => train_full_resolution(&corpus, tc, p, &mut observer),
        (Some(p), false) => train_two_stage_from(&corpus, tc, p, &mut observer),
        (None, true) => {
            train_full_resolution(&corpus, tc, mlp_init(tc.hidden, &cfg.init)?, &mut observer)
        }
        (None, false) => train_two_stage(&corpus, tc, &cfg.init, &mut observer),
    })?;

    write_with(&out.join(HISTORY_FILE), |w| {
        Ok(outcome.history.write_csv(w)?)
    })?;
    write_with(&out.join(TERMINATIONS_FILE), |w| {
        Ok(outcome.history.write_terminations(w)?)
    })?;
    save_checkpoint(&out.join(MODEL_FILE), &outcome.params)?;
    outcome
        .history
        .write_terminations(std::io::stdout().lock())?;
    if outcome.aborted() {
        let msg = outcome
            .history
            .stages
            .last()
            .and_then(|s| s.message.clone())
            .unwrap_or_default();
        bail!("training aborted: {msg}");
    }
    Ok(())
}

fn write_comparison(
    w: &mut impl Write,
    pred: &Trajectory,
    truth: &Trajectory,
    dt: f64,
) -> Result<()> {
    writeln!(w, "t,X_pred,S_pred,V_pred,X_true,S_true,V_true,S_in")?;
    let feed = truth.s_in();
    for (i, (p, t)) in pred.states().iter().zip(truth.states()).enumerate() {
        let s_in = feed.get(i).map(|v| f64_text(*v)).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            f64_text(i as f64 * dt),
            f64_text(p.x),
            f64_text(p.s),
            f64_text(p.v),
            f64_text(t.x),
            f64_text(t.s),
            f64_text(t.v),
            s_in
        )?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    let corpus = open_corpus(&a.corpus)?;
    let params = open_checkpoint(&a.checkpoint)?;
    adopt_corpus(&mut cfg, &corpus);
    cfg.train.hidden = params.hidden();
    let out = &a.common.out;
    let inputs = Inputs {
        corpus: Some(a.corpus.clone()),
        checkpoint: Some(a.checkpoint.clone()),
        ..Inputs::default()
    };
    RunManifest::new("eval", out, Some(corpus.seed), inputs, cfg.clone()).write(out)?;

    let test = &corpus.test;
    if test.is_empty() {
        bail!("corpus has no test samples");
    }
    let opts = cfg.train.rate_options();
    let (per_sample, total) = pool_from_env()?.install(|| -> Result<_> {
        let per = evaluate_per_sample(&params, test, &corpus.cfg, opts)?;
        let total = evaluate(&params, test, &corpus.cfg, &cfg.train)?;
        Ok((per, total))
    })?;
    write_with(&out.join(PER_SAMPLE_FILE), |w| {
        writeln!(w, "sample,loss,per_sample_per_step,loss_ratio")?;
        for (i, r) in per_sample.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{}",
                f64_text(r.total),
                f64_text(r.per_sample_per_step),
                f64_text(r.loss_ratio)
            )?;
        }
        Ok(())
    })?;

    let mut order: Vec<usize> = (0..per_sample.len()).collect();
    order.sort_by(|&i, &j| {
        per_sample[i]
            .total
            .total_cmp(&per_sample[j].total)
            .then(i.cmp(&j))
    });
    let picks = [
        ("lowest", order[0]),
        ("median", order[(order.len() - 1) / 2]),
        ("highest", order[order.len() - 1]),
    ];
    for (name, i) in picks {
        let pred = predict(&params, &test[i], &corpus.cfg, opts)?;
        write_with(&out.join(format!("trajectory_{name}.csv")), |w| {
            write_comparison(w, &pred, &test[i].truth, corpus.cfg.dt)
        })?;
        println!(
            "{name}: sample {i} loss_ratio {}",
            f64_text(per_sample[i].loss_ratio)
        );
    }
    println!("test loss_ratio {}", f64_text(total.loss_ratio));
    Ok(())
}

pub fn export_mu(a: &ExportMuArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    let corpus = open_corpus(&a.corpus)?;
    let params = open_checkpoint(&a.checkpoint)?;
    adopt_corpus(&mut cfg, &corpus);
    cfg.train.hidden = params.hidden();
    let out = &a.common.out;
    let inputs = Inputs {
        corpus: Some(a.corpus.clone()),
        checkpoint: Some(a.checkpoint.clone()),
        ..Inputs::default()
    };
    RunManifest::new("export-mu", out, Some(corpus.seed), inputs, cfg.clone()).write(out)?;

    let region = Region::visited(corpus.test.iter().map(|e| &e.truth), a.cells, a.cells)
        .context("building the visited region")?;
    let opts = cfg.train.rate_options();
    let rate = LearnedRate::new(&params, opts);
    write_with(&out.join(MU_GRID_FILE), |w| {
        writeln!(w, "X,S,mu_hat,mu_g,difference")?;
        for &(x, s) in region.points() {
            let (hat, truth) = (rate.rate(x, s), haldane_mu(s, &corpus.cfg));
            writeln!(
                w,
                "{},{},{},{},{}",
                f64_text(x),
                f64_text(s),
                f64_text(hat),
                f64_text(truth),
                f64_text(hat - truth)
            )?;
        }
        Ok(())
    })?;
    let rmse = mu_surface_error(&params, &corpus.cfg, &region, opts);
    fs::write(out.join(MU_RMSE_FILE), format!("rmse={}\n", f64_text(rmse)))?;
    println!("points={} rmse={}", region.points().len(), f64_text(rmse));
    Ok(())
}
