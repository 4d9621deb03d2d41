//! Acceptance suite: one line per criterion, nonzero exit if any criterion fails.
//!
//! Criteria that need the w8a dataset print `NOT RUN` when it is absent. Point
//! `LOCALSGD_W8A` at the file or place it at `crates/core/data/w8a`.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use localsgd::async_engine::{run_async_local_sgd, DelayModel, Placement};
use localsgd::averaging::{sum_of_weights, AveragingScheme, RunningAverage};
use localsgd::data::{read_libsvm, Dataset};
use localsgd::error::{Error, ParseErrorKind};
use localsgd::fixtures::{logistic50, standard_quadratic};
use localsgd::harness::config::LemmaConfig;
use localsgd::harness::grid::{grid_search, grid_value, GridChoice, GridWindow, StepFamily};
use localsgd::harness::{self, compute_reference_fstar, iterations_for, Cell, Problem, SearchSettings};
use localsgd::lemmas::{held_out_constants, mean_stderr, theorem_config};
use localsgd::objectives::{LogisticL2, Objective};
use localsgd::schedules::{StepSchedule, SyncSchedule};
use localsgd::sync_engine::{run_local_sgd, run_minibatch_sgd, RecordOptions, RunConfig};
use localsgd::theory::{speedup, theorem1_bound};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

enum Outcome {
    Pass(String),
    Fail(String),
    NotRun(String),
}

type Check = fn() -> Outcome;

fn pass(msg: impl Into<String>) -> Outcome {
    Outcome::Pass(msg.into())
}

fn fail(msg: impl Into<String>) -> Outcome {
    Outcome::Fail(msg.into())
}

fn w8a_path() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("LOCALSGD_W8A").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/w8a")),
    ];
    candidates.into_iter().flatten().find(|p| p.is_file())
}

fn c1_w8a_fstar() -> Outcome {
    let Some(path) = w8a_path() else {
        return Outcome::NotRun("w8a not found (set LOCALSGD_W8A or run scripts/fetch_w8a.sh)".into());
    };
    let start = Instant::now();
    let data = match read_libsvm(&path, Some(300)) {
        Ok(d) => Arc::new(d),
        Err(e) => return fail(format!("w8a parse: {e}")),
    };
    let lambda = data.default_lambda();
    let sol = match compute_reference_fstar(data, lambda, 1e-10) {
        Ok(s) => s,
        Err(e) => return fail(format!("{e}")),
    };
    let elapsed = start.elapsed();
    let err = (sol.f_star - 0.126433176216545).abs();
    let msg = format!(
        "f_star = {:.15}, |diff| = {err:.2e}, {:.1}s",
        sol.f_star,
        elapsed.as_secs_f64()
    );
    if err <= 1e-5 && elapsed < Duration::from_secs(120) {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn c2_minibatch_equivalence() -> Outcome {
    let f = logistic50();
    let steps = 300;
    let mut worst = 0.0f64;
    for (k, b) in [(2, 1), (4, 1), (4, 4)] {
        let step = StepSchedule::constant(0.5).unwrap();
        let cfg = RunConfig::new(k, SyncSchedule::every_step(steps).unwrap(), step, 11)
            .with_batch(b)
            .with_record(RecordOptions {
                iterates: true,
                virtual_seq: false,
            });
        let local = run_local_sgd(&cfg, &f).unwrap().iterates.unwrap();
        let mb = run_minibatch_sgd(&f, k, b, steps, &step, 11, None).unwrap();
        if local.len() != mb.len() {
            return fail(format!("K={k} b={b}: {} vs {} recorded steps", local.len(), mb.len()));
        }
        for (workers, x) in local.iter().zip(&mb) {
            for w in workers {
                for (u, v) in w.iter().zip(x) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    let msg = format!("max coordinate difference {worst:.2e} over {steps} steps");
    if worst <= 1e-12 {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn c3_async_degeneration() -> Outcome {
    let (q, _, c) = standard_quadratic();
    let a = 16.0 * c.kappa + 9.0;
    let record = RecordOptions {
        iterates: true,
        virtual_seq: true,
    };
    let sync = SyncSchedule::regular(400, 8).unwrap();
    let cfg = RunConfig::new(4, sync.clone(), StepSchedule::theorem_decay(c.mu, a).unwrap(), 3).with_record(record);
    let s = run_local_sgd(&cfg, &q).unwrap();
    let r = run_async_local_sgd(&cfg, &vec![sync; 4], DelayModel::zero(), &Placement::uniform(4), &q).unwrap();
    let (si, ai) = (s.iterates.unwrap(), r.trace.iterates.unwrap());
    let mut worst = 0.0f64;
    for (x, y) in si.iter().flatten().flatten().zip(ai.iter().flatten().flatten()) {
        worst = worst.max((x - y).abs());
    }
    for (x, y) in s.final_mean.iter().zip(&r.aggregate) {
        worst = worst.max((x - y).abs());
    }

    let one = SyncSchedule::regular(400, 8).unwrap();
    let step = StepSchedule::theorem_decay(c.mu, a).unwrap();
    let cfg1 = RunConfig::new(1, one.clone(), step, 5).with_record(record);
    let r1 = run_async_local_sgd(&cfg1, &[one], DelayModel::fixed(3, 0), &Placement::uniform(1), &q).unwrap();
    let serial = run_minibatch_sgd(&q, 1, 1, 400, &step, 5, None).unwrap();
    let its = r1.trace.iterates.unwrap();
    let exact = its.len() == serial.len() && its.iter().zip(&serial).all(|(w, x)| &w[0] == x);
    let msg = format!("K=4 zero delay max diff {worst:.2e}; K=1 serial identical: {exact}");
    if worst <= 1e-12 && exact {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn c4_lemma_suite() -> Outcome {
    let start = Instant::now();
    let (q, sol, _) = standard_quadratic();
    let problems = [
        Problem {
            name: "quadratic".into(),
            objective: Arc::new(q),
            reference: Some(sol),
        },
        Problem {
            name: "logistic50".into(),
            objective: Arc::new(logistic50()),
            reference: None,
        },
    ];
    let settings = LemmaConfig::default();
    let mut failures = Vec::new();
    let mut checks = 0;
    for p in &problems {
        match harness::run_lemma_suite(p, &settings) {
            Ok(reports) => {
                for r in reports {
                    checks += 1;
                    if !r.pass || r.trials < 1000 {
                        failures.push(format!("{}: {r}", p.name));
                    }
                }
            }
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(600) {
        failures.push(format!("runtime {:.0}s", elapsed.as_secs_f64()));
    }
    if failures.is_empty() && checks == 10 {
        pass(format!(
            "{checks} checks, >= 1000 trials each, {:.1}s",
            elapsed.as_secs_f64()
        ))
    } else {
        fail(failures.join("; "))
    }
}

fn c5_theorem_bound() -> Outcome {
    let (q, sol, exact) = standard_quadratic();
    let seeds = 100u64;
    let mut cases = Vec::new();
    for k in [1usize, 2, 4, 8] {
        for t in [1000usize, 10_000] {
            let root = ((t / k) as f64).sqrt() as usize;
            let mut hs = vec![1, 4, root];
            hs.dedup();
            for h in hs {
                cases.push((k, t, h));
            }
        }
    }
    let mut worst: Option<(f64, String)> = None;
    let mut failures = Vec::new();
    for &(k, t, h) in &cases {
        let cfg = theorem_config(&q, k, SyncSchedule::regular(t, h).unwrap(), h, 1).unwrap();
        let a = cfg.stepsize.shift().unwrap();
        // σ² is exact for this quadratic; G² is measured on held-out trajectories
        let measured = held_out_constants(&cfg, &q, 4, (t / 200).max(1)).unwrap();
        let consts = exact.with_moments(exact.sigma2, measured.g2).unwrap();
        let gaps: Vec<f64> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let run = run_local_sgd(&cfg.clone().with_seed(1000 + s), &q).unwrap();
                q.value(&run.theorem_average.unwrap()) - sol.f_star
            })
            .collect();
        let (mean, se) = mean_stderr(&gaps);
        let bound = theorem1_bound(&consts, k, t, h, 1, a, sol.r0(&vec![0.0; q.dim()])).unwrap();
        let ratio = mean / bound;
        let label = format!("K={k} T={t} H={h}: mean {mean:.3e} +- {se:.1e} vs bound {bound:.3e}");
        if mean > bound + 3.0 * se {
            failures.push(label.clone());
        }
        if worst.as_ref().is_none_or(|(r, _)| ratio > *r) {
            worst = Some((ratio, label));
        }
    }
    let (_, tightest) = worst.unwrap();
    if failures.is_empty() {
        pass(format!("{} (K,T,H) cells, tightest {tightest}", cases.len()))
    } else {
        fail(failures.join("; "))
    }
}

fn median_search(
    obj: &dyn Objective,
    f_star: f64,
    cell: Cell,
    settings: &SearchSettings,
    seeds: u64,
) -> Option<GridChoice> {
    grid_search(&settings.families, settings.window, |family, i| {
        let mut hits: Vec<usize> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let st = SearchSettings {
                    seed: s + 1,
                    ..settings.clone()
                };
                iterations_for(obj, f_star, cell, family, grid_value(i), &st).map(|r| r.unwrap_or(usize::MAX))
            })
            .collect::<Result<_, _>>()?;
        hits.sort_unstable();
        let m = hits[hits.len() / 2];
        Ok((m != usize::MAX).then_some(m))
    })
    .unwrap()
}

fn c6_linear_speedup() -> Outcome {
    let (q, sol, _) = standard_quadratic();
    let eps = 3e-5;
    let k = 8;
    let settings = SearchSettings {
        epochs_cap: 2000.0,
        eval_resolution: 0.01,
        seed: 1,
        window: GridWindow::new(-20, 4, -6).unwrap(),
        families: vec![StepFamily::Decay, StepFamily::Constant],
    };
    let cell = |workers, h| Cell {
        workers,
        h,
        batch: 1,
        eps,
    };
    let Some(single) = median_search(&q, sol.f_star, cell(1, 1), &settings, 9) else {
        return fail("K=1 never reaches eps");
    };
    let h = ((single.iterations / k) as f64).sqrt() as usize;
    let Some(many) = median_search(&q, sol.f_star, cell(k, h.max(1)), &settings, 9) else {
        return fail(format!("K={k} H={h} never reaches eps"));
    };
    let msg = format!(
        "eps={eps}: T*(1) = {}, T*(8, H={h}) = {}, reduction {:.2}x (median of 9 seeds)",
        single.iterations,
        many.iterations,
        single.iterations as f64 / many.iterations as f64
    );
    if 4 * many.iterations <= single.iterations {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn c7_speedup_model() -> Outcome {
    let hs = [1usize, 2, 4, 8, 16, 32, 64];
    let ks = [1usize, 2, 3, 4, 8, 16, 32, 64, 128];
    let rhos = [1.0, 5.0, 25.0, 100.0];
    let epss = [0.0, 1e-4, 1e-3, 5e-3, 0.1];
    let mut problems = Vec::new();
    for &rho in &rhos {
        for &h in &hs {
            for &eps in &epss {
                let s1 = speedup(1, h, eps, rho).unwrap();
                if s1 != 1.0 {
                    problems.push(format!("S(1) = {s1} at H={h} eps={eps} rho={rho}"));
                }
            }
            for &k in &ks {
                let s = speedup(k, h, 0.0, rho).unwrap();
                let closed = k as f64 / (1.0 + 2.0 * rho * (k as f64 - 1.0) / h as f64);
                if (s - closed).abs() > 1e-12 * closed.max(1.0) {
                    problems.push(format!("closed form K={k} H={h} rho={rho}: {s} vs {closed}"));
                }
            }
        }
        for &k in ks.iter().filter(|&&k| k >= 2) {
            for w in hs.windows(2) {
                let (lo, hi) = (speedup(k, w[0], 0.0, rho).unwrap(), speedup(k, w[1], 0.0, rho).unwrap());
                if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                    problems.push(format!(
                        "not increasing in H at K={k} rho={rho}: H={} {lo}, H={} {hi}",
                        w[0], w[1]
                    ));
                }
            }
        }
    }
    if problems.is_empty() {
        pass(format!("{} (K,H,rho) points", hs.len() * ks.len() * rhos.len()))
    } else {
        fail(problems.join("; "))
    }
}

fn neumaier(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + comp
}

fn c8_averaging() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 5;
    let len = 1000;
    let mut worst_avg = 0.0f64;
    for _ in 0..5 {
        let stream: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect())
            .collect();
        for scheme in AveragingScheme::TRACKED
            .into_iter()
            .chain([AveragingScheme::Quadratic { shift: 37.5 }])
        {
            let mut avg = RunningAverage::new(scheme, dim);
            for (t, x) in stream.iter().enumerate() {
                avg.update(x, t).unwrap();
                let direct: Vec<f64> = match scheme.weight(0) {
                    None => x.clone(),
                    Some(_) => {
                        let ws: Vec<f64> = (0..=t).map(|s| scheme.weight(s).unwrap()).collect();
                        let total = neumaier(ws.iter().copied());
                        (0..dim)
                            .map(|j| neumaier(ws.iter().zip(&stream).map(|(w, y)| w * y[j])) / total)
                            .collect()
                    }
                };
                let scale = direct.iter().map(|v| v.abs()).fold(1e-300, f64::max);
                for (u, v) in avg.value().iter().zip(&direct) {
                    worst_avg = worst_avg.max((u - v).abs() / scale);
                }
            }
        }
    }
    let mut worst_s = 0.0f64;
    for a in [1.0, 1.5, 2.0, 17.0, 65.0, 100.25, 1e3, 1e4] {
        for t in [1usize, 2, 3, 10, 99, 1000, 10_000, 100_000] {
            let direct = neumaier((0..t).map(|s| (a + s as f64) * (a + s as f64)));
            let closed = sum_of_weights(a, t).unwrap();
            worst_s = worst_s.max((closed - direct).abs() / direct);
        }
    }
    let msg = format!("running averages rel err {worst_avg:.2e}, S_T rel err {worst_s:.2e}");
    if worst_avg <= 1e-9 && worst_s <= 1e-12 {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn parse_error(name: &str, dim: Option<usize>) -> Option<(usize, ParseErrorKind)> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    match read_libsvm(path, dim) {
        Err(Error::Parse { line, kind }) => Some((line, kind)),
        _ => None,
    }
}

fn c9_parser() -> Outcome {
    let mut problems = Vec::new();
    let expected = [
        (
            "malformed_token.libsvm",
            None,
            3,
            ParseErrorKind::MalformedToken("2:x".into()),
        ),
        ("bad_label.libsvm", None, 2, ParseErrorKind::InvalidLabel("0".into())),
        (
            "nonincreasing.libsvm",
            None,
            4,
            ParseErrorKind::NonIncreasingIndex { previous: 4, index: 2 },
        ),
        (
            "beyond_dimension.libsvm",
            Some(3),
            2,
            ParseErrorKind::IndexBeyondDimension { index: 5, dimension: 3 },
        ),
        (
            "nonfinite.libsvm",
            None,
            3,
            ParseErrorKind::NonFiniteValue("nan".into()),
        ),
    ];
    for (name, dim, line, kind) in &expected {
        let got = parse_error(name, *dim);
        if got.as_ref() != Some(&(*line, kind.clone())) {
            problems.push(format!("{name}: expected line {line} {kind}, got {got:?}"));
        }
    }
    let fixture = logistic50();
    let f0 = fixture.value(&vec![0.0; fixture.dim()]);
    if (f0 - std::f64::consts::LN_2).abs() > 1e-9 {
        problems.push(format!("fixture f(0) = {f0}"));
    }
    if !problems.is_empty() {
        return fail(problems.join("; "));
    }
    let fixtures = format!("{} malformed fixtures rejected with line numbers", expected.len());
    let Some(path) = w8a_path() else {
        return Outcome::NotRun(format!("{fixtures}; w8a part not run (w8a not found)"));
    };
    let data: Dataset = match read_libsvm(&path, Some(300)) {
        Ok(d) => d,
        Err(e) => return fail(format!("w8a: {e}")),
    };
    let f = LogisticL2::with_default_lambda(Arc::new(data));
    let f0 = f.value(&vec![0.0; f.dim()]);
    let msg = format!(
        "{fixtures}; w8a n = {}, d = {}, f(0) - ln 2 = {:.1e}",
        f.dataset().len(),
        f.dim(),
        f0 - std::f64::consts::LN_2
    );
    if f.dataset().len() == 49749 && f.dim() == 300 && (f0 - std::f64::consts::LN_2).abs() <= 1e-9 {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        "[dataset]\nkind = \"fixture\"\nname = \"logistic50\"\n\n[sweep]\neps = [0.02, 0.005]\nworkers = [1, 2, 4]\nh = [1, 2, 4]\nbatch = [1, 2]\n\n[output]\ndir = \"out\"\n",
    )
    .unwrap();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let status = Command::new(env!("CARGO_BIN_EXE_localsgd"))
            .args(["run", config.to_str().unwrap()])
            .env("LOCALSGD_THREADS", threads)
            .output()
            .unwrap();
        if !status.status.success() && status.status.code() != Some(2) {
            return fail(format!(
                "localsgd run exited with {:?}: {}",
                status.status,
                String::from_utf8_lossy(&status.stderr)
            ));
        }
        outputs.push(std::fs::read(dir.path().join("out/results.csv")).unwrap());
    }
    let msg = format!("{} bytes, runs with 1 and 4 threads", outputs[0].len());
    if outputs[0] == outputs[1] && !outputs[0].is_empty() {
        pass(msg)
    } else {
        fail(msg)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("w8a reference value", c1_w8a_fstar),
        ("H=1 equivalence with mini-batch SGD", c2_minibatch_equivalence),
        ("async degeneration", c3_async_degeneration),
        ("lemma suite", c4_lemma_suite),
        ("convergence bound validity", c5_theorem_bound),
        ("linear speedup in iterations", c6_linear_speedup),
        ("speedup model", c7_speedup_model),
        ("averaging equivalence", c8_averaging),
        ("parser", c9_parser),
        ("determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(m) => ("PASS", m),
            Outcome::Fail(m) => {
                failed += 1;
                ("FAIL", m)
            }
            Outcome::NotRun(m) => ("NOT RUN", m),
        };
        println!("[{:>2}] {tag:<7} {name} ({secs:.1}s): {detail}", i + 1);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
