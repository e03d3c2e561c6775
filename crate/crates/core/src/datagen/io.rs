//! Corpus container, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "GBXCORP\0"
//! version      u32      = 1
//! config_len   u64      length of the config block in bytes
//! config       UTF-8    canonical `key=value` lines, sorted by key
//! 3 x split    train, validation, test, each:
//!   count      u64
//!   count x sample:
//!     x0       3 x f64  (X0, S0, V0)
//!     s_in     n x f64
//!     X        (n+1) x f64 ground truth
//!     S        (n+1) x f64
//!     V        (n+1) x f64
//! ```
//!
//! `n` is the `dyn.n_steps` entry of the config block. The block also records
//! the byte order, the corpus seed and the rejection count.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::{Corpus, Example, GenConfig, Sample, Split};
use crate::dynamics::{BioreactorConfig, State, Trajectory};
use crate::error::{Error, Result};
use crate::fmt::f64_text;

pub const CORPUS_MAGIC: [u8; 8] = *b"GBXCORP\0";
pub const CORPUS_VERSION: u32 = 1;
pub const STATS_CSV_HEADER: &str = "step,max_X,max_S,running_max_X,running_max_S";

const MAX_CONFIG_BYTES: u64 = 1 << 20;

fn config_block(c: &Corpus) -> String {
    let d = &c.cfg;
    let g = &c.gen;
    let mut kv: BTreeMap<&str, String> = BTreeMap::new();
    kv.insert("byte_order", "little".into());
    kv.insert("seed", c.seed.to_string());
    kv.insert("rejections", c.rejections.to_string());
    kv.insert("dyn.k1", f64_text(d.k1));
    kv.insert("dyn.feed_rate", f64_text(d.feed_rate));
    kv.insert("dyn.dt", f64_text(d.dt));
    kv.insert("dyn.n_steps", d.n_steps.to_string());
    kv.insert("dyn.mu_star", f64_text(d.mu_star));
    kv.insert("dyn.k_m", f64_text(d.k_m));
    kv.insert("dyn.k_i", f64_text(d.k_i));
    kv.insert("dyn.blowup_bound", f64_text(d.blowup_bound));
    kv.insert("gen.x0_var", f64_text(g.x0_var));
    kv.insert("gen.s0_var", f64_text(g.s0_var));
    kv.insert("gen.v0_var", f64_text(g.v0_var));
    kv.insert("gen.v0_mean", f64_text(g.v0_mean));
    kv.insert("gen.v_min", f64_text(g.v_min));
    kv.insert("gen.s_in0_mean", f64_text(g.s_in0_mean));
    kv.insert("gen.s_in0_var", f64_text(g.s_in0_var));
    kv.insert("gen.s_in_step_var", f64_text(g.s_in_step_var));
    kv.insert("gen.reflect_s_in", g.reflect_s_in.to_string());
    kv.insert("gen.train", g.train.to_string());
    kv.insert("gen.validation", g.validation.to_string());
    kv.insert("gen.test", g.test.to_string());
    kv.insert("gen.max_reject_frac", f64_text(g.max_reject_frac));
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

struct Kv(BTreeMap<String, String>);

impl Kv {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line `{line}`")))?;
            map.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        Ok(Kv(map))
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Format(format!("config block lacks `{key}`")))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|_| Error::Format(format!("bad value `{raw}` for `{key}`")))
    }
}

fn write_f64s<W: Write>(w: &mut W, xs: impl IntoIterator<Item = f64>) -> Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_corpus<W: Write>(mut w: W, c: &Corpus) -> Result<()> {
    let block = config_block(c);
    w.write_all(&CORPUS_MAGIC)?;
    w.write_all(&CORPUS_VERSION.to_le_bytes())?;
    w.write_all(&(block.len() as u64).to_le_bytes())?;
    w.write_all(block.as_bytes())?;
    for split in Split::ALL {
        let examples = c.split(split);
        w.write_all(&(examples.len() as u64).to_le_bytes())?;
        for ex in examples {
            let x0 = ex.sample.x0;
            write_f64s(&mut w, [x0.x, x0.s, x0.v])?;
            write_f64s(&mut w, ex.sample.s_in.iter().copied())?;
            let st = ex.truth.states();
            write_f64s(&mut w, st.iter().map(|s| s.x))?;
            write_f64s(&mut w, st.iter().map(|s| s.s))?;
            write_f64s(&mut w, st.iter().map(|s| s.v))?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_corpus<R: Read>(mut r: R) -> Result<Corpus> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != CORPUS_MAGIC {
        return Err(Error::Format("not a corpus file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != CORPUS_VERSION {
        return Err(Error::Format(format!(
            "unsupported corpus version {version}"
        )));
    }
    let len = read_u64(&mut r)?;
    if len > MAX_CONFIG_BYTES {
        return Err(Error::Format(format!(
            "config block of {len} bytes is implausible"
        )));
    }
    let mut text = vec![0u8; len as usize];
    r.read_exact(&mut text)?;
    let text =
        String::from_utf8(text).map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let kv = Kv::parse(&text)?;
    if kv.raw("byte_order")? != "little" {
        return Err(Error::Format(
            "only little-endian corpora are supported".into(),
        ));
    }
    let cfg = BioreactorConfig {
        k1: kv.get("dyn.k1")?,
        feed_rate: kv.get("dyn.feed_rate")?,
        dt: kv.get("dyn.dt")?,
        n_steps: kv.get("dyn.n_steps")?,
        mu_star: kv.get("dyn.mu_star")?,
        k_m: kv.get("dyn.k_m")?,
        k_i: kv.get("dyn.k_i")?,
        blowup_bound: kv.get("dyn.blowup_bound")?,
    };
    cfg.validate()?;
    let gen = GenConfig {
        x0_var: kv.get("gen.x0_var")?,
        s0_var: kv.get("gen.s0_var")?,
        v0_var: kv.get("gen.v0_var")?,
        v0_mean: kv.get("gen.v0_mean")?,
        v_min: kv.get("gen.v_min")?,
        s_in0_mean: kv.get("gen.s_in0_mean")?,
        s_in0_var: kv.get("gen.s_in0_var")?,
        s_in_step_var: kv.get("gen.s_in_step_var")?,
        reflect_s_in: kv.get("gen.reflect_s_in")?,
        train: kv.get("gen.train")?,
        validation: kv.get("gen.validation")?,
        test: kv.get("gen.test")?,
        max_reject_frac: kv.get("gen.max_reject_frac")?,
    };
    let n = cfg.n_steps;
    let mut splits: Vec<Vec<Example>> = Vec::with_capacity(3);
    for split in Split::ALL {
        let count = read_u64(&mut r)? as usize;
        if count != gen.size(split) {
            return Err(Error::Format(format!(
                "{} split holds {count} samples, config says {}",
                split.name(),
                gen.size(split)
            )));
        }
        let mut examples = Vec::with_capacity(count);
        for _ in 0..count {
            let x0 = read_f64s(&mut r, 3)?;
            let s_in = read_f64s(&mut r, n)?;
            let xs = read_f64s(&mut r, n + 1)?;
            let ss = read_f64s(&mut r, n + 1)?;
            let vs = read_f64s(&mut r, n + 1)?;
            let states = (0..=n).map(|t| State::new(xs[t], ss[t], vs[t])).collect();
            let truth = Trajectory::new(states, s_in.clone())?;
            examples.push(Example {
                sample: Sample {
                    x0: State::new(x0[0], x0[1], x0[2]),
                    s_in,
                },
                truth,
            });
        }
        splits.push(examples);
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format("trailing bytes after corpus".into()));
    }
    let test = splits.pop().expect("three splits");
    let validation = splits.pop().expect("three splits");
    let train = splits.pop().expect("three splits");
    Ok(Corpus {
        seed: kv.get("seed")?,
        cfg,
        gen,
        train,
        validation,
        test,
        rejections: kv.get("rejections")?,
    })
}

/// Per-step maxima over a split, and their running maxima over time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub step: usize,
    pub max_x: f64,
    pub max_s: f64,
    pub running_max_x: f64,
    pub running_max_s: f64,
}

pub fn corpus_stats(split: &[Example]) -> Vec<StepStats> {
    let Some(first) = split.first() else {
        return Vec::new();
    };
    let len = first.truth.states().len();
    let mut out = Vec::with_capacity(len);
    let (mut run_x, mut run_s) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in 0..len {
        let (mut mx, mut ms) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for ex in split {
            let st = ex.truth.states()[t];
            mx = mx.max(st.x);
            ms = ms.max(st.s);
        }
        run_x = run_x.max(mx);
        run_s = run_s.max(ms);
        out.push(StepStats {
            step: t,
            max_x: mx,
            max_s: ms,
            running_max_x: run_x,
            running_max_s: run_s,
        });
    }
    out
}

pub fn write_stats_csv<W: Write>(mut w: W, stats: &[StepStats]) -> Result<()> {
    writeln!(w, "{STATS_CSV_HEADER}")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.step,
            f64_text(s.max_x),
            f64_text(s.max_s),
            f64_text(s.running_max_x),
            f64_text(s.running_max_s)
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_corpus;

    fn corpus() -> Corpus {
        let cfg = BioreactorConfig {
            n_steps: 24,
            ..Default::default()
        };
        generate_corpus(5, &cfg, &GenConfig::default().with_sizes(3, 2, 1)).unwrap()
    }

    #[test]
    fn corpus_round_trip() {
        let c = corpus();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &c).unwrap();
        assert_eq!(&buf[..8], b"GBXCORP\0");
        let back = read_corpus(buf.as_slice()).unwrap();
        assert_eq!(back, c);
        let mut again = Vec::new();
        write_corpus(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn config_block_is_sorted_key_value() {
        let block = config_block(&corpus());
        let keys: Vec<&str> = block
            .lines()
            .map(|l| l.split('=').next().unwrap())
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(block.contains("byte_order=little\n"));
        assert!(block.contains("dyn.n_steps=24\n"));
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus()).unwrap();
        assert!(read_corpus(&buf[..buf.len() - 8]).is_err());
        let mut bad = buf.clone();
        bad[3] ^= 0xff;
        assert!(matches!(read_corpus(bad.as_slice()), Err(Error::Format(_))));
        let mut long = buf;
        long.extend_from_slice(&[1, 2, 3]);
        assert!(read_corpus(long.as_slice()).is_err());
    }

    #[test]
    fn stats_are_running_maxima() {
        let c = corpus();
        let stats = corpus_stats(&c.test);
        assert_eq!(stats.len(), 25);
        for w in stats.windows(2) {
            assert!(w[1].running_max_x >= w[0].running_max_x);
            assert!(w[1].running_max_x >= w[1].max_x);
        }
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &stats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(STATS_CSV_HEADER));
        assert_eq!(text.lines().count(), 26);
    }
}
