//! Acceptance criteria 1 to 8. Runs without the libtest harness so every
//! criterion prints its own PASS/FAIL line; exits non-zero if any fails.

use std::time::{Duration, Instant};

use graybox::adjoint::{
    bptt_gradient, fd_gradient, make_mask, LossReport, RateOptions, S_ONLY_DENSE, XS_DENSE,
    XS_EVERY_8TH,
};
use graybox::datagen::{
    corpus_stats, draw_initial_raw, generate_corpus, sample_rng, sample_sin_series, Corpus,
    GenConfig, Split,
};
use graybox::dynamics::{BioreactorConfig, Haldane, State};
use graybox::nn::{mlp_init, GroupInit, InitSpec, MlpGrads, MlpParams};
use graybox::parallel::pool;
use graybox::training::{
    adam_step, check_stopping, evaluate, mu_surface_error, train_two_stage, AdamConfig, AdamState,
    Region, StopDecision, StopMonitor, Termination, TrainConfig, TrainOutcome,
};

/// Seed of the desk-scale recovery runs (corpus, shuffles and initial draw).
const DESK_SEED: u64 = 8;
/// Mini-batch size of the desk-scale runs.
const DESK_BATCH: usize = 8;
/// Cells per axis of the occupancy grid defining the visited region.
const REGION_CELLS: usize = 32;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn merge(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        pass: parts.iter().all(|o| o.pass),
        detail: parts
            .iter()
            .map(|o| o.detail.as_str())
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn within_budget(name: &str, elapsed: Duration, budget: Duration) -> Outcome {
    check(
        elapsed < budget,
        format!(
            "{name} runtime {:.2}s (budget {:.0}s)",
            elapsed.as_secs_f64(),
            budget.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 1

fn max_rel_err(a: &MlpGrads, b: &MlpGrads) -> f64 {
    let (a, b) = (a.as_slice(), b.as_slice());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    // Entries many orders below the largest one are compared on that scale.
    let floor = 1e-6 * scale;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = (x - y).abs();
            if d == 0.0 {
                0.0
            } else {
                d / x.abs().max(y.abs()).max(floor)
            }
        })
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    const CASES: usize = 20;
    const KINK_MARGIN: f64 = 1e-3;
    let start = Instant::now();
    let init = InitSpec {
        b1: GroupInit::new("normal", 0.0, 0.5),
        b2: GroupInit::new("normal", 0.0, 0.1),
        ..InitSpec::default()
    };
    let mut parts = Vec::new();
    for horizon in [1usize, 8, 64] {
        let cfg = BioreactorConfig {
            n_steps: horizon,
            ..BioreactorConfig::default()
        };
        let mask = make_mask(XS_DENSE, horizon).unwrap();
        let (mut done, mut excluded, mut worst) = (0, 0, 0.0f64);
        let mut seed = 0u64;
        while done < CASES {
            seed += 1;
            let corpus =
                generate_corpus(seed, &cfg, &GenConfig::default().with_sizes(2, 1, 1)).unwrap();
            let mut p = mlp_init(4, &init.clone().with_seed(seed)).unwrap();
            for v in p.as_mut_slice() {
                *v *= 0.5;
            }
            let opts = RateOptions::default();
            let g = match bptt_gradient(&p, &corpus.train, &mask, &cfg, opts) {
                Ok(g) => g,
                Err(e) if e.is_blowup() => {
                    excluded += 1;
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            if g.kink_margin < KINK_MARGIN {
                excluded += 1;
                continue;
            }
            let fd = fd_gradient(&p, &corpus.train, &mask, &cfg, opts, 1e-6).unwrap();
            worst = worst.max(max_rel_err(&g.grads, &fd));
            done += 1;
        }
        parts.push(check(
            worst <= 1e-5,
            format!("horizon {horizon}: {CASES} cases, max rel err {worst:.2e} (<= 1e-5), {excluded} excluded"),
        ));
    }
    parts.push(within_budget(
        "gradient check",
        start.elapsed(),
        Duration::from_secs(30),
    ));
    merge(parts)
}

// ---------------------------------------------------------------- 2

fn desk_corpus(samples: usize, n_steps: usize, seed: u64) -> Corpus {
    let cfg = BioreactorConfig {
        n_steps,
        ..BioreactorConfig::default()
    };
    generate_corpus(
        seed,
        &cfg,
        &GenConfig::default().with_sizes(samples, samples, samples),
    )
    .unwrap()
}

/// Euler with step dt / `refine`, holding the feed constant over each coarse step;
/// returns the states at the coarse step boundaries.
fn refined(x0: State, s_in: &[f64], cfg: &BioreactorConfig, refine: usize) -> Vec<State> {
    let h = Haldane {
        mu_star: cfg.mu_star,
        k_m: cfg.k_m,
        k_i: cfg.k_i,
    };
    let dt = cfg.dt / refine as f64;
    let mut st = x0;
    let mut out = vec![st];
    for &feed in s_in {
        for _ in 0..refine {
            let mu = h.eval(st.s);
            let dx = mu * st.x - cfg.feed_rate * st.x / st.v;
            let ds = -cfg.k1 * mu * st.x + cfg.feed_rate * (feed - st.s) / st.v;
            st = State::new(st.x + dt * dx, st.s + dt * ds, st.v + dt * cfg.feed_rate);
        }
        out.push(st);
    }
    out
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let corpus = desk_corpus(64, 512, 2);
    let cfg = &corpus.cfg;

    let mut worst_v = 0.0f64;
    for split in Split::ALL {
        for ex in corpus.split(split) {
            let v0 = ex.truth.initial().v;
            for (t, st) in ex.truth.states().iter().enumerate() {
                let exact = v0 + cfg.feed_rate * cfg.dt * t as f64;
                let bound = cfg.n_steps as f64 * f64::EPSILON * st.v.abs();
                worst_v = worst_v.max((st.v - exact).abs() / bound);
            }
        }
    }

    // Relative sup-norm of the (X, S, V) trajectory, per sample; per-channel
    // figures are printed alongside.
    let channels: [fn(&State) -> f64; 3] = [|s| s.x, |s| s.s, |s| s.v];
    let (mut worst_rel, mut worst_x, mut worst_s) = (0.0f64, 0.0f64, 0.0f64);
    for ex in &corpus.test {
        let fine = refined(ex.sample.x0, &ex.sample.s_in, cfg, 16);
        let coarse = ex.truth.states();
        let sup: Vec<f64> = channels
            .iter()
            .map(|f| fine.iter().map(|s| f(s).abs()).fold(0.0, f64::max))
            .collect();
        let diff: Vec<f64> = channels
            .iter()
            .map(|f| {
                coarse
                    .iter()
                    .zip(&fine)
                    .map(|(a, b)| (f(a) - f(b)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        worst_rel = worst_rel.max(norm(&diff) / norm(&sup));
        worst_x = worst_x.max(diff[0] / sup[0]);
        worst_s = worst_s.max(diff[1] / sup[1]);
    }
    merge(vec![
        check(
            worst_v <= 1.0,
            format!("volume error / (n eps |V|) max {worst_v:.3} (<= 1) over {} trajectories", 3 * 64),
        ),
        check(worst_rel <= 0.01, format!(
                "dt vs dt/16 relative sup error {worst_rel:.2e} (<= 1e-2); X alone {worst_x:.2e}, S alone {worst_s:.2e}"
            )),
        within_budget("integrator", start.elapsed(), Duration::from_secs(60)),
    ])
}

// ---------------------------------------------------------------- 3

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn criterion_3() -> Outcome {
    const DRAWS: usize = 10_000;
    let gen = GenConfig::default();
    let raws: Vec<[f64; 3]> = (0..DRAWS)
        .map(|i| draw_initial_raw(&mut sample_rng(31, Split::Train, i), &gen))
        .collect();
    let mut parts = Vec::new();
    for (k, (name, target)) in [("X0", 0.1), ("S0", 0.01), ("V0", 2.0)]
        .into_iter()
        .enumerate()
    {
        let col: Vec<f64> = raws.iter().map(|r| r[k]).collect();
        let v = variance(&col);
        let rel = (v / target - 1.0).abs();
        parts.push(check(
            rel <= 0.05,
            format!("var {name} {v:.4} vs {target} ({:.1}%)", 100.0 * rel),
        ));
    }

    let n = BioreactorConfig::default().n_steps;
    let free = GenConfig {
        reflect_s_in: false,
        ..GenConfig::default()
    };
    let disp: Vec<f64> = (0..DRAWS)
        .map(|i| {
            let s = sample_sin_series(&mut sample_rng(32, Split::Validation, i), n, &free);
            s[n - 1] - s[0]
        })
        .collect();
    let target = (n - 1) as f64 * 0.01;
    let v = variance(&disp);
    let rel = (v / target - 1.0).abs();
    parts.push(check(
        rel <= 0.05,
        format!(
            "walk displacement var {v:.3} vs {target:.2} ({:.1}%)",
            100.0 * rel
        ),
    ));

    let corpus = generate_corpus(33, &BioreactorConfig::default(), &GenConfig::default()).unwrap();
    let stats = corpus_stats(&corpus.test);
    let last = stats.last().unwrap();
    let at = &stats[256];
    parts.push(check(
        last.running_max_x > at.running_max_x && last.running_max_s > at.running_max_s,
        format!(
            "test running max after step 256: X {:.4} -> {:.4}, S {:.4} -> {:.4} ({} x {} steps)",
            at.running_max_x,
            last.running_max_x,
            at.running_max_s,
            last.running_max_s,
            corpus.test.len(),
            corpus.cfg.n_steps
        ),
    ));
    merge(parts)
}

// ---------------------------------------------------------------- 4, 5, 8

fn desk_train_config(mask: &str) -> TrainConfig {
    TrainConfig {
        batch_size: DESK_BATCH,
        seed: DESK_SEED,
        hidden: 16,
        stage1_coarsen_factor: 8,
        mask_mode: mask.to_owned(),
        ..TrainConfig::default()
    }
}

fn desk_run(corpus: &Corpus, mask: &str, threads: usize) -> TrainOutcome {
    let tc = desk_train_config(mask);
    let init = InitSpec::default().with_seed(DESK_SEED);
    pool(Some(threads))
        .unwrap()
        .install(|| train_two_stage(corpus, &tc, &init, &mut ()))
        .unwrap()
}

fn test_ratio(p: &MlpParams, corpus: &Corpus, mask: &str) -> LossReport {
    evaluate(p, &corpus.test, &corpus.cfg, &desk_train_config(mask)).unwrap()
}

fn stage_line(o: &TrainOutcome) -> String {
    o.history
        .stages
        .iter()
        .map(|s| format!("stage {} {} after {} epochs", s.stage, s.reason, s.epochs))
        .collect::<Vec<_>>()
        .join(", ")
}

fn criterion_4(corpus: &Corpus, run: &TrainOutcome, elapsed: Duration) -> Outcome {
    let stage2 = run.history.summary(2);
    let reason = stage2.map(|s| s.reason);
    let stopped_by_rule = matches!(
        reason,
        Some(
            Termination::ImprovementFailure
                | Termination::GeneralizationFailure
                | Termination::AdequatePerformance
        )
    );
    let test = test_ratio(&run.params, corpus, S_ONLY_DENSE);
    let region = Region::visited(
        corpus.test.iter().map(|e| &e.truth),
        REGION_CELLS,
        REGION_CELLS,
    )
    .unwrap();
    let rmse = mu_surface_error(&run.params, &corpus.cfg, &region, RateOptions::default());
    let bound = 0.1 * corpus.cfg.mu_star;
    merge(vec![
        check(stopped_by_rule, format!("seed {DESK_SEED}: {}", stage_line(run))),
        check(
            test.loss_ratio <= 10.0,
            format!("test loss_ratio {:.3} (<= 10)", test.loss_ratio),
        ),
        check(
            rmse <= bound,
            format!(
                "mu rmse {rmse:.4} (<= {bound}) over {} region points",
                region.points().len()
            ),
        ),
        within_budget("training", elapsed, Duration::from_secs(30 * 60)),
    ])
}

fn criterion_5(corpus: &Corpus) -> Outcome {
    let start = Instant::now();
    let run = desk_run(corpus, XS_EVERY_8TH, 1);
    let elapsed = start.elapsed();
    if run.aborted() {
        return check(false, format!("training aborted: {}", stage_line(&run)));
    }
    let last = test_ratio(&run.params, corpus, XS_EVERY_8TH).loss_ratio;
    let first = test_ratio(run.stage1_params.as_ref().unwrap(), corpus, XS_EVERY_8TH).loss_ratio;
    merge(vec![
        check(true, stage_line(&run)),
        check(last <= 50.0, format!("test loss_ratio {last:.3} (<= 50)")),
        check(
            last < first,
            format!("stage-1 parameters {first:.3} > final {last:.3}"),
        ),
        within_budget("training", elapsed, Duration::from_secs(30 * 60)),
    ])
}

fn history_without_time(o: &TrainOutcome) -> String {
    let mut buf = Vec::new();
    o.history.write_csv(&mut buf).unwrap();
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_8(corpus: &Corpus, first: &TrainOutcome) -> Outcome {
    let second = desk_run(corpus, S_ONLY_DENSE, 3);
    let same_csv = history_without_time(first) == history_without_time(&second);
    let same_params = first.params == second.params;
    check(
        same_csv && same_params,
        format!(
            "1 vs 3 threads: history {} ({} rows), final parameters {}",
            if same_csv { "identical" } else { "DIFFERENT" },
            first.history.epochs.len(),
            if same_params {
                "identical"
            } else {
                "DIFFERENT"
            }
        ),
    )
}

// ---------------------------------------------------------------- 6

fn rep(v: f64) -> LossReport {
    LossReport::new(v, 1, 1)
}

/// Feed `(train, val)` pairs until a rule fires; returns the firing epoch (1-based).
fn first_stop(seq: &[(f64, f64)]) -> Option<(usize, StopDecision)> {
    let mut m = StopMonitor::default();
    seq.iter().enumerate().find_map(
        |(i, &(t, v))| match check_stopping(&mut m, &rep(t), &rep(v)) {
            StopDecision::Continue => None,
            d => Some((i + 1, d)),
        },
    )
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();

    // Best training loss at epoch 5, flat afterwards.
    let mut seq: Vec<(f64, f64)> = (0..5).map(|k| (1.0 - 0.1 * k as f64, 1.0)).collect();
    seq.extend(std::iter::repeat_n((0.6, 1.0), 30));
    let got = first_stop(&seq);
    parts.push(check(
        got == Some((17, StopDecision::ImprovementFailure)),
        format!("improvement failure at {got:?} (best 5 + 12 = 17)"),
    ));

    // Ratio best-val / train crosses 2 at epoch 4.
    let seq = [(1.0, 1.0), (0.8, 1.0), (0.55, 1.0), (0.49, 1.1), (0.3, 1.0)];
    let got = first_stop(&seq);
    parts.push(check(
        got == Some((4, StopDecision::GeneralizationFailure)),
        format!("generalization failure at {got:?} (first ratio > 2 at 4)"),
    ));
    // Exactly 2 does not fire.
    let got = first_stop(&[(1.0, 1.0), (0.5, 1.0)]);
    parts.push(check(got.is_none(), format!("ratio exactly 2: {got:?}")));

    let seq = [(1.0, 1e-3), (1.0, 3e-5), (1.0, 2.99e-5), (1.0, 1e-6)];
    let got = first_stop(&seq);
    parts.push(check(
        got == Some((3, StopDecision::AdequatePerformance)),
        format!("adequate performance at {got:?} (first < 3e-5 at 3)"),
    ));

    // All three conditions at once: adequate wins; then generalization over improvement.
    let mut m = StopMonitor::new(1, 2.0, 3e-5).unwrap();
    check_stopping(&mut m, &rep(1e-7), &rep(1e-3));
    let all = check_stopping(&mut m, &rep(1e-7), &rep(1e-5));
    let mut m = StopMonitor::new(1, 2.0, 3e-5).unwrap();
    check_stopping(&mut m, &rep(1e-7), &rep(1e-3));
    let two = check_stopping(&mut m, &rep(1e-7), &rep(1e-3));
    parts.push(check(
        all == StopDecision::AdequatePerformance && two == StopDecision::GeneralizationFailure,
        format!("precedence: all three -> {all:?}, generalization+improvement -> {two:?}"),
    ));
    parts.push(within_budget(
        "stopping suite",
        start.elapsed(),
        Duration::from_secs(1),
    ));
    merge(parts)
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = AdamConfig::default();
    let lr = 1e-3;
    let g = [0.3, -2.0, 1e-4, 5.0, -7e-3];
    let p0 = [0.1, -0.2, 0.3, 0.0, 1.0];
    let mut p = MlpParams::from_flat(1, p0.to_vec()).unwrap();
    let grads = MlpGrads::from_flat(1, g.to_vec()).unwrap();
    let mut st = AdamState::new(&p, cfg);
    let (mut m, mut v) = ([0.0; 5], [0.0; 5]);
    let mut expected = p0;
    let mut worst = 0.0f64;
    for t in 1..=100 {
        adam_step(&mut st, &mut p, &grads, lr).unwrap();
        // Closed form of the moments under a constant gradient.
        let (b1t, b2t) = (cfg.beta1.powi(t), cfg.beta2.powi(t));
        for i in 0..5 {
            m[i] = g[i] * (1.0 - b1t);
            v[i] = g[i] * g[i] * (1.0 - b2t);
            let m_hat = m[i] / (1.0 - b1t);
            let v_hat = v[i] / (1.0 - b2t);
            expected[i] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
            worst = worst.max((p.as_slice()[i] - expected[i]).abs());
            worst = worst.max((st.first_moment()[i] - m[i]).abs());
            worst = worst.max((st.second_moment()[i] - v[i]).abs());
        }
    }

    let mut q = MlpParams::from_flat(1, p0.to_vec()).unwrap();
    let mut sq = AdamState::new(&q, cfg);
    let zero = MlpGrads::from_flat(1, vec![0.0; 5]).unwrap();
    for _ in 0..10 {
        adam_step(&mut sq, &mut q, &zero, lr).unwrap();
    }
    let fixpoint = q.as_slice() == p0;

    let mut r = MlpParams::zeros(1).unwrap();
    let mut sr = AdamState::new(&r, cfg);
    adam_step(&mut sr, &mut r, &grads, lr).unwrap();
    let signs = r
        .as_slice()
        .iter()
        .zip(g)
        .all(|(x, gi)| x.signum() == -gi.signum());
    let first_size = r
        .as_slice()
        .iter()
        .all(|x| (x.abs() - lr).abs() <= lr * 1e-3);

    merge(vec![
        check(
            worst <= 1e-12,
            format!("100 constant-gradient steps, max deviation {worst:.1e} (<= 1e-12)"),
        ),
        check(
            fixpoint,
            "zero gradient leaves parameters unchanged".to_owned(),
        ),
        check(
            signs && first_size,
            "first step is -lr * sign(g)".to_owned(),
        ),
        within_budget("Adam suite", start.elapsed(), Duration::from_secs(1)),
    ])
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!(
            "criterion {n} [{}] {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, name, o));
    };

    report(1, "gradient exactness", criterion_1());
    report(2, "integrator correctness", criterion_2());
    report(3, "corpus statistics", criterion_3());

    let corpus = desk_corpus(128, 512, DESK_SEED);
    let start = Instant::now();
    let s_only = desk_run(&corpus, S_ONLY_DENSE, 1);
    let elapsed = start.elapsed();
    report(
        4,
        "desk-scale recovery",
        criterion_4(&corpus, &s_only, elapsed),
    );
    report(5, "missing-timestep desk-scale", criterion_5(&corpus));
    report(6, "stopping criteria", criterion_6());
    report(7, "Adam", criterion_7());
    report(8, "reproducibility", criterion_8(&corpus, &s_only));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: FAILED criteria {failed:?}");
        std::process::exit(1);
    }
}
