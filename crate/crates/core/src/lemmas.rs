//! Monte-Carlo and deterministic checks of the inequalities behind the convergence proof.
//!
//! Every check produces a [`CheckReport`] whose pass flag is
//! `statistic ≤ bound + 3·stderr`. Checks over time report the step with the smallest
//! relative margin, and `first_violation` names the first failing step if any.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::async_engine::{run_async_local_sgd, DelayModel, Placement};
use crate::averaging::sum_of_weights;
use crate::error::{Error, Result};
use crate::linalg::dist_sq;
use crate::objectives::{
    check_dim, estimate_constants, gradient_moments, Objective, ProblemConstants, ReferenceSolution,
};
use crate::schedules::{StepSchedule, SyncSchedule};
use crate::sync_engine::{
    initial_states, run_local_sgd, step_once, synchronize, virtual_average, EvalPolicy, RecordOptions, RunConfig,
};
use crate::worker_rng;

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub lemma: String,
    pub trials: usize,
    pub statistic: f64,
    pub bound: f64,
    pub margin: f64,
    pub stderr: f64,
    pub pass: bool,
    /// Step at which `statistic` and `bound` were taken, for checks over time.
    pub step: Option<usize>,
    pub first_violation: Option<usize>,
}

impl CheckReport {
    pub fn new(lemma: &str, trials: usize, statistic: f64, bound: f64, stderr: f64) -> Self {
        CheckReport {
            lemma: lemma.to_string(),
            trials,
            statistic,
            bound,
            margin: bound - statistic,
            stderr,
            pass: statistic <= bound + 3.0 * stderr,
            step: None,
            first_violation: None,
        }
    }

    /// Consistency of the stored pass flag with the stored numbers.
    pub fn is_consistent(&self) -> bool {
        self.pass == (self.statistic <= self.bound + 3.0 * self.stderr)
            && (self.margin - (self.bound - self.statistic)).abs() <= 1e-12 * self.bound.abs().max(1.0)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {} trials={} statistic={:.6e} bound={:.6e} stderr={:.3e}",
            self.lemma,
            if self.pass { "PASS" } else { "FAIL" },
            self.trials,
            self.statistic,
            self.bound,
            self.stderr
        )?;
        if let Some(t) = self.step {
            write!(f, " step={t}")?;
        }
        if let Some(t) = self.first_violation {
            write!(f, " first_violation={t}")?;
        }
        Ok(())
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn require_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Exact `E‖g − ḡ‖² = (1/K²) Σ_k Var_k` for one sample per worker at `states`.
pub fn exact_aggregate_variance(objective: &dyn Objective, states: &[Vec<f64>]) -> f64 {
    let k = states.len() as f64;
    states
        .iter()
        .map(|x| gradient_moments(objective, x).variance)
        .sum::<f64>()
        / (k * k)
}

/// Monte-Carlo `E‖g_t − ḡ_t‖²` at fixed worker iterates against `σ̂²_max / K`, with
/// `σ̂²_max` the largest exact per-point variance.
pub fn check_variance_reduction(
    objective: &dyn Objective,
    states: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<CheckReport> {
    require_trials(trials)?;
    if states.is_empty() {
        return Err(Error::invalid("no worker states"));
    }
    for x in states {
        check_dim(objective, x)?;
    }
    let k = states.len();
    let d = objective.dim();
    let n = objective.num_components();
    let full: Vec<Vec<f64>> = states.iter().map(|x| objective.gradient(x)).collect();
    let mut g_bar = vec![0.0; d];
    for g in &full {
        for (a, b) in g_bar.iter_mut().zip(g) {
            *a += b / k as f64;
        }
    }
    let samples: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|r| {
            let mut rng = worker_rng(seed, r);
            let mut g = vec![0.0; d];
            for x in states {
                let i = rng.random_range(0..n);
                objective.add_component_gradient(x, i, 1.0 / k as f64, &mut g);
            }
            dist_sq(&g, &g_bar)
        })
        .collect();
    let (mean, se) = mean_stderr(&samples);
    let sigma2_max = states
        .iter()
        .map(|x| gradient_moments(objective, x).variance)
        .fold(0.0, f64::max);
    Ok(CheckReport::new(
        "variance-reduction",
        trials,
        mean,
        sigma2_max / k as f64,
        se,
    ))
}

/// `σ²` and `G²` as maxima over the iterates of `runs` held-out seeded runs of `config`,
/// sampled every `stride` steps. Component moments are enumerated exactly.
pub fn held_out_constants(
    config: &RunConfig,
    objective: &dyn Objective,
    runs: usize,
    stride: usize,
) -> Result<ProblemConstants> {
    let points = held_out_points(
        runs,
        stride,
        |seed| {
            let cfg = config
                .clone()
                .with_seed(seed)
                .with_eval(EvalPolicy::Never)
                .with_record(RecordOptions {
                    iterates: true,
                    virtual_seq: false,
                });
            Ok(run_local_sgd(&cfg, objective)?.iterates.expect("recorded"))
        },
        config.seed,
    )?;
    estimate_constants(objective, &points, objective.num_components(), 0)
}

/// As [`held_out_constants`] for asynchronous runs.
pub fn held_out_async_constants(
    config: &RunConfig,
    syncs: &[SyncSchedule],
    delay: DelayModel,
    placement: &Placement,
    objective: &dyn Objective,
    runs: usize,
    stride: usize,
) -> Result<ProblemConstants> {
    let points = held_out_points(
        runs,
        stride,
        |seed| {
            let cfg = config
                .clone()
                .with_seed(seed)
                .with_eval(EvalPolicy::Never)
                .with_record(RecordOptions {
                    iterates: true,
                    virtual_seq: false,
                });
            Ok(run_async_local_sgd(&cfg, syncs, delay, placement, objective)?
                .trace
                .iterates
                .expect("recorded"))
        },
        config.seed,
    )?;
    estimate_constants(objective, &points, objective.num_components(), 0)
}

const HELD_OUT_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn held_out_points<F>(runs: usize, stride: usize, run: F, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(u64) -> Result<Vec<Vec<Vec<f64>>>> + Sync,
{
    if runs == 0 || stride == 0 {
        return Err(Error::invalid("held-out estimation needs runs >= 1 and stride >= 1"));
    }
    let per_run: Vec<Vec<Vec<f64>>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let its = run(seed.wrapping_add(HELD_OUT_OFFSET).wrapping_add(r))?;
            let len = its.len();
            Ok(its
                .into_iter()
                .enumerate()
                .filter(|(t, _)| t % stride == 0 || t + 1 == len)
                .flat_map(|(_, xs)| xs)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(per_run.into_iter().flatten().collect())
}

fn theorem_schedule(config: &RunConfig, window: usize) -> Result<f64> {
    match config.stepsize {
        StepSchedule::TheoremDecay { a, .. } => {
            if a < window as f64 {
                return Err(Error::Precondition(format!(
                    "shift a = {a} must be at least {window} so that eta_t <= 2 eta_(t+{window})"
                )));
            }
            Ok(a)
        }
        _ => Err(Error::Precondition("deviation checks need theorem stepsizes".into())),
    }
}

/// Per-step comparison of Monte-Carlo means against a per-step bound.
fn compare_over_time(lemma: &str, runs: usize, samples: &[Vec<f64>], bound: impl Fn(usize) -> f64) -> CheckReport {
    let steps = samples[0].len();
    let mut worst: Option<(f64, CheckReport)> = None;
    let mut first_violation = None;
    let mut column = vec![0.0; runs];
    for t in 0..steps {
        for (c, s) in column.iter_mut().zip(samples) {
            *c = s[t];
        }
        let (mean, se) = mean_stderr(&column);
        let b = bound(t);
        let mut report = CheckReport::new(lemma, runs, mean, b, se);
        report.step = Some(t);
        if !report.pass && first_violation.is_none() {
            first_violation = Some(t);
        }
        let scale = b.abs().max(f64::MIN_POSITIVE);
        let rel = (b + 3.0 * se - mean) / scale;
        if worst.as_ref().is_none_or(|(w, _)| rel < *w) {
            worst = Some((rel, report));
        }
    }
    let mut report = worst.expect("at least one step").1;
    report.first_violation = first_violation;
    report.pass = first_violation.is_none();
    report
}

/// Monte-Carlo `(1/K) Σ_k E‖x̄_t − x_t^k‖²` over `runs` seeds against `4η_t²G²H²` at every step.
pub fn check_deviation_bound(
    config: &RunConfig,
    objective: &dyn Objective,
    constants: &ProblemConstants,
    runs: usize,
) -> Result<CheckReport> {
    require_trials(runs)?;
    config.validate(objective)?;
    let h = config.sync.gap_bound();
    theorem_schedule(config, h)?;
    let samples: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = config
                .clone()
                .with_seed(config.seed.wrapping_add(r))
                .with_eval(EvalPolicy::Never);
            Ok(run_local_sgd(&cfg, objective)?.deviation)
        })
        .collect::<Result<_>>()?;
    let hf = h as f64;
    Ok(compare_over_time("deviation", runs, &samples, |t| {
        let eta = config.stepsize.at(t);
        4.0 * eta * eta * constants.g2 * hf * hf
    }))
}

/// Async deviation against `12η_t²G²(H+τ)²`.
pub fn check_async_deviation(
    config: &RunConfig,
    syncs: &[SyncSchedule],
    delay: DelayModel,
    placement: &Placement,
    objective: &dyn Objective,
    constants: &ProblemConstants,
    runs: usize,
) -> Result<CheckReport> {
    require_trials(runs)?;
    let h = syncs.iter().map(SyncSchedule::gap_bound).max().unwrap_or(1);
    theorem_schedule(config, h + delay.tau)?;
    let samples: Vec<Vec<f64>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = config
                .clone()
                .with_seed(config.seed.wrapping_add(r))
                .with_eval(EvalPolicy::Never);
            Ok(run_async_local_sgd(&cfg, syncs, delay, placement, objective)?
                .trace
                .deviation)
        })
        .collect::<Result<_>>()?;
    let w = (h + delay.tau) as f64;
    Ok(compare_over_time("async-deviation", runs, &samples, |t| {
        let eta = config.stepsize.at(t);
        12.0 * eta * eta * constants.g2 * w * w
    }))
}

/// Per-step check of
/// `E‖x̄_{t+1}−x*‖² ≤ (1−μη_t)E‖x̄_t−x*‖² + η_t²E‖g_t−ḡ_t‖² − ½η_t E(f(x̄_t)−f★) + 2η_t(L/K)Σ_k E‖x̄_t−x_t^k‖²`.
///
/// Both sides are evaluated on the same runs; the standard error is that of the per-run
/// difference of the two sides.
pub fn check_perturbed_inequality(
    config: &RunConfig,
    objective: &dyn Objective,
    reference: &ReferenceSolution,
    runs: usize,
) -> Result<CheckReport> {
    require_trials(runs)?;
    config.validate(objective)?;
    check_dim(objective, &reference.x_star)?;
    let c = objective.curvature();
    let eta_max = (0..config.steps).map(|t| config.stepsize.at(t)).fold(0.0, f64::max);
    if eta_max > 1.0 / (4.0 * c.l) * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "stepsize {eta_max} exceeds 1/(4L) = {}",
            1.0 / (4.0 * c.l)
        )));
    }
    let d = objective.dim();
    let x_star = &reference.x_star;
    let f_star = reference.f_star;
    // per run: (lhs_t, rhs_t) for t < T
    let per_run: Vec<Vec<(f64, f64)>> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let cfg = config.clone().with_seed(config.seed.wrapping_add(r));
            let mut states = initial_states(&cfg, d);
            let mut rows = Vec::with_capacity(cfg.steps);
            let mut mean = virtual_average(&states);
            for t in 0..cfg.steps {
                let eta = cfg.stepsize.at(t);
                let dev = states.iter().map(|s| dist_sq(&mean, &s.x)).sum::<f64>() / states.len() as f64;
                let gap = objective.value(&mean) - f_star;
                let before = dist_sq(&mean, x_star);
                let grads = step_once(&mut states, t, &cfg, objective)?;
                if cfg.sync.contains(t + 1) {
                    synchronize(&mut states);
                }
                let noise = dist_sq(&grads.g, &grads.g_bar);
                mean = virtual_average(&states);
                let lhs = dist_sq(&mean, x_star);
                let rhs = (1.0 - c.mu * eta) * before + eta * eta * noise - 0.5 * eta * gap + 2.0 * eta * c.l * dev;
                rows.push((lhs, rhs));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut worst: Option<(f64, CheckReport)> = None;
    let mut first_violation = None;
    for t in 0..config.steps {
        let lhs: Vec<f64> = per_run.iter().map(|r| r[t].0).collect();
        let diff: Vec<f64> = per_run.iter().map(|r| r[t].1 - r[t].0).collect();
        let (l, _) = mean_stderr(&lhs);
        let (dm, se) = mean_stderr(&diff);
        let mut report = CheckReport::new("perturbed-inequality", runs, l, l + dm, se);
        report.step = Some(t);
        if !report.pass && first_violation.is_none() {
            first_violation = Some(t);
        }
        let rel = (dm + 3.0 * se) / report.bound.abs().max(f64::MIN_POSITIVE);
        if worst.as_ref().is_none_or(|(w, _)| rel < *w) {
            worst = Some((rel, report));
        }
    }
    let mut report = worst.expect("T >= 1").1;
    report.first_violation = first_violation;
    report.pass = first_violation.is_none();
    Ok(report)
}

/// Parameters of the recursion `a_{t+1} ≤ (1−μη_t)a_t − η_t e_t A + η_t²B + η_t³C` with
/// `η_t = 4/(μ(a+t))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecursionParams {
    pub shift: f64,
    pub mu: f64,
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
    pub horizon: usize,
}

impl RecursionParams {
    pub fn eta(&self, t: usize) -> f64 {
        4.0 / (self.mu * (self.shift + t as f64))
    }

    /// Right-hand side of the recursion at step `t`.
    pub fn step(&self, t: usize, a_t: f64, e_t: f64) -> f64 {
        let eta = self.eta(t);
        (1.0 - self.mu * eta) * a_t - eta * e_t * self.a_coef + eta * eta * self.b_coef + eta.powi(3) * self.c_coef
    }
}

/// Sequences `a_0..=a_T` and `e_0..e_{T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionSequences {
    pub a: Vec<f64>,
    pub e: Vec<f64>,
}

/// Builds sequences satisfying the recursion with equality, with `e_t = fraction·μ·a_t/A`
/// and a nonnegative `slack(t)` subtracted (clamped so that `a_{t+1} ≥ 0`).
pub fn equality_recursion(
    params: &RecursionParams,
    a0: f64,
    fraction: f64,
    mut slack: impl FnMut(usize) -> f64,
) -> RecursionSequences {
    let mut a = vec![a0];
    let mut e = Vec::with_capacity(params.horizon);
    for t in 0..params.horizon {
        let at = a[t];
        let et = fraction * params.mu * at / params.a_coef;
        let next = params.step(t, at, et);
        let s = slack(t).max(0.0).min(next.max(0.0));
        e.push(et);
        a.push((next - s).max(0.0));
    }
    RecursionSequences { a, e }
}

/// Verifies the recursion for the built sequences and then the weighted-sum bound
/// `(A/S_T) Σ w_t e_t ≤ μa³a_0/(4S_T) + 2T(T+2a)B/(μS_T) + 16TC/(μ²S_T)`.
pub fn check_recursion_lemma<F>(params: &RecursionParams, builder: F) -> Result<CheckReport>
where
    F: FnOnce(&RecursionParams) -> RecursionSequences,
{
    let p = *params;
    if !(p.shift > 1.0)
        || !(p.mu > 0.0)
        || !(p.a_coef > 0.0)
        || !(p.b_coef >= 0.0)
        || !(p.c_coef >= 0.0)
        || p.horizon == 0
    {
        return Err(Error::invalid(
            "recursion needs a > 1, mu > 0, A > 0, B, C >= 0 and T >= 1",
        ));
    }
    let seq = builder(&p);
    if seq.a.len() != p.horizon + 1 || seq.e.len() != p.horizon {
        return Err(Error::Ragged("recursion sequences have the wrong length".into()));
    }
    if let Some(t) = seq.a.iter().chain(&seq.e).position(|v| !(*v >= 0.0)) {
        return Err(Error::Precondition(format!(
            "sequence entry {t} is negative or not finite"
        )));
    }
    for t in 0..p.horizon {
        let allowed = p.step(t, seq.a[t], seq.e[t]);
        if seq.a[t + 1] > allowed + 1e-12 * allowed.abs().max(seq.a[t]) {
            return Err(Error::Precondition(format!(
                "recursion violated at t = {t}: a_(t+1) = {} > {allowed}",
                seq.a[t + 1]
            )));
        }
    }
    let s_t = sum_of_weights(p.shift, p.horizon)?;
    let tf = p.horizon as f64;
    let weighted: f64 = seq
        .e
        .iter()
        .enumerate()
        .map(|(t, e)| (p.shift + t as f64).powi(2) * e)
        .sum();
    let lhs = p.a_coef * weighted / s_t;
    let rhs = p.mu * p.shift.powi(3) * seq.a[0] / (4.0 * s_t)
        + 2.0 * tf * (tf + 2.0 * p.shift) * p.b_coef / (p.mu * s_t)
        + 16.0 * tf * p.c_coef / (p.mu * p.mu * s_t);
    Ok(CheckReport::new("recursion", 1, lhs, rhs, 0.0))
}

/// Runs [`check_recursion_lemma`] on `trials` randomly built sequences (random `e_t/a_t` ratio
/// and random nonnegative slack) and returns the instance with the smallest relative margin.
pub fn check_recursion_random(params: &RecursionParams, a0: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    if trials < MIN_TRIALS {
        return Err(Error::invalid(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    let reports = (0..trials)
        .into_par_iter()
        .map(|r| {
            let mut rng = worker_rng(seed, r);
            let fraction: f64 = rng.random_range(0.0..=1.0);
            let scale: f64 = rng.random_range(0.0..1.0);
            check_recursion_lemma(params, |p| {
                equality_recursion(p, a0, fraction, |t| {
                    if rng.random_bool(0.3) {
                        scale * p.eta(t) * rng.random::<f64>()
                    } else {
                        0.0
                    }
                })
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = reports.iter().filter(|r| !r.pass).count();
    let mut worst = reports
        .into_iter()
        .min_by(|x, y| (x.margin / x.bound).total_cmp(&(y.margin / y.bound)))
        .expect("trials >= 1");
    worst.trials = trials;
    worst.pass = failures == 0;
    Ok(worst)
}

/// Theorem-schedule run configuration helper shared by the lemma suite: `a` is the smallest
/// shift admissible for gap `window`.
pub fn theorem_config(
    objective: &dyn Objective,
    workers: usize,
    sync: SyncSchedule,
    window: usize,
    seed: u64,
) -> Result<RunConfig> {
    let c = objective.curvature();
    let a = crate::schedules::minimal_shift(c.l / c.mu, window);
    Ok(RunConfig::new(workers, sync, StepSchedule::theorem_decay(c.mu, a)?, seed).with_eval(EvalPolicy::Never))
}
