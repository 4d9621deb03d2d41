//! Synchronous local SGD: `K` workers take local mini-batch SGD steps and are reset to
//! the average of their post-step iterates at every synchronization index.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::averaging::{AveragingScheme, RunningAverage, WeightedAccumulator};
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, mean_of};
use crate::objectives::{check_dim, Objective};
use crate::schedules::{StepSchedule, SyncSchedule};
use crate::worker_rng;

/// Which per-step quantities a run keeps in memory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RecordOptions {
    /// Every worker iterate `x_t^k`.
    pub iterates: bool,
    /// The worker mean `x̄_t`.
    pub virtual_seq: bool,
}

/// When function values of the tracked averages are evaluated. `t = 0` and the last step
/// are always evaluated unless the policy is `Never`. A single worker counts as
/// synchronized at every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalPolicy {
    Never,
    /// Every `every` steps, plus every synchronization index when `at_sync`.
    Every {
        every: usize,
        at_sync: bool,
    },
    /// Synchronization indices at least `spacing` steps after the previous evaluation.
    ThinnedSync {
        spacing: usize,
    },
    /// Synchronization indices at which the step count has grown by at least the relative
    /// `resolution` since the previous evaluation.
    Relative {
        resolution: f64,
    },
}

impl EvalPolicy {
    /// Every synchronization index plus every `⌈T/1000⌉` steps.
    pub fn default_for(horizon: usize) -> Self {
        EvalPolicy::Every {
            every: horizon.div_ceil(1000).max(1),
            at_sync: true,
        }
    }

    /// `synced` says whether the worker iterates agree at `t`: a sync index, or a single worker.
    fn due(&self, t: usize, horizon: usize, last_eval: Option<usize>, synced: bool) -> bool {
        match *self {
            EvalPolicy::Never => false,
            _ if t == 0 || t == horizon => true,
            EvalPolicy::Every { every, at_sync } => t.is_multiple_of(every) || (at_sync && synced),
            EvalPolicy::ThinnedSync { spacing } => synced && last_eval.is_none_or(|l| t >= l + spacing),
            EvalPolicy::Relative { resolution } => {
                synced && last_eval.is_none_or(|l| t >= l + ((resolution * l as f64).ceil() as usize).max(1))
            }
        }
    }
}

/// Halt a run as soon as a tracked average reaches `f − f★ ≤ eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps: f64,
    pub f_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub workers: usize,
    pub steps: usize,
    pub batch: usize,
    pub sync: SyncSchedule,
    pub stepsize: StepSchedule,
    pub seed: u64,
    /// Starting point; zeros when `None`.
    pub x0: Option<Vec<f64>>,
    pub record: RecordOptions,
    pub eval: EvalPolicy,
    pub stop: Option<StopRule>,
}

impl RunConfig {
    /// Horizon is taken from the synchronization schedule; batch size 1.
    pub fn new(workers: usize, sync: SyncSchedule, stepsize: StepSchedule, seed: u64) -> Self {
        let steps = sync.horizon();
        RunConfig {
            workers,
            steps,
            batch: 1,
            sync,
            stepsize,
            seed,
            x0: None,
            record: RecordOptions::default(),
            eval: EvalPolicy::default_for(steps),
            stop: None,
        }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_record(mut self, record: RecordOptions) -> Self {
        self.record = record;
        self
    }

    pub fn with_eval(mut self, eval: EvalPolicy) -> Self {
        self.eval = eval;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, objective: &dyn Objective) -> Result<()> {
        if self.workers == 0 || self.steps == 0 || self.batch == 0 {
            return Err(Error::invalid("need K >= 1, T >= 1 and b >= 1"));
        }
        if self.sync.horizon() != self.steps {
            return Err(Error::invalid(format!(
                "synchronization horizon {} differs from T = {}",
                self.sync.horizon(),
                self.steps
            )));
        }
        match self.eval {
            EvalPolicy::Every { every: 0, .. } | EvalPolicy::ThinnedSync { spacing: 0 } => {
                return Err(Error::invalid("evaluation interval must be >= 1"));
            }
            EvalPolicy::Relative { resolution } if !(resolution >= 0.0) => {
                return Err(Error::invalid("evaluation resolution must be >= 0"));
            }
            _ => {}
        }
        if let Some(stop) = self.stop {
            if !(stop.eps > 0.0) {
                return Err(Error::invalid("target accuracy must be positive"));
            }
        }
        if let Some(x0) = &self.x0 {
            check_dim(objective, x0)?;
        }
        validate_stepsize(&self.stepsize, objective, self.sync.gap_bound(), 0)
    }

    pub(crate) fn start_point(&self, dim: usize) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![0.0; dim])
    }
}

pub(crate) fn validate_stepsize(
    stepsize: &StepSchedule,
    objective: &dyn Objective,
    h: usize,
    tau: usize,
) -> Result<()> {
    if let StepSchedule::TheoremDecay { .. } = stepsize {
        let c = objective.curvature();
        if !(c.mu > 0.0) {
            return Err(Error::Precondition("theorem stepsizes need mu > 0".into()));
        }
        stepsize.validate_async(c.l / c.mu, h, tau)?;
    }
    Ok(())
}

/// One worker's local sequence and its private sampling stream.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub x: Vec<f64>,
    pub rng: ChaCha8Rng,
}

impl WorkerState {
    pub fn new(id: usize, x0: Vec<f64>, seed: u64) -> Self {
        WorkerState {
            id,
            x: x0,
            rng: worker_rng(seed, id),
        }
    }
}

/// Initial worker states for `config`.
pub fn initial_states(config: &RunConfig, dim: usize) -> Vec<WorkerState> {
    let x0 = config.start_point(dim);
    (0..config.workers)
        .map(|k| WorkerState::new(k, x0.clone(), config.seed))
        .collect()
}

/// `out = mean of b sampled component gradients at x`; consumes `b` draws from `rng`.
#[inline]
pub(crate) fn minibatch_gradient(
    objective: &dyn Objective,
    x: &[f64],
    batch: usize,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let n = objective.num_components();
    let scale = 1.0 / batch as f64;
    for _ in 0..batch {
        let i = rng.random_range(0..n);
        objective.add_component_gradient(x, i, scale, out);
    }
}

/// Advances every worker by one local step without averaging. Accumulates the aggregate
/// stochastic gradient into `g` when given.
fn local_step(
    states: &mut [WorkerState],
    eta: f64,
    batch: usize,
    objective: &dyn Objective,
    scratch: &mut [f64],
    mut g: Option<&mut [f64]>,
) {
    let k = states.len() as f64;
    for w in states.iter_mut() {
        minibatch_gradient(objective, &w.x, batch, &mut w.rng, scratch);
        if let Some(g) = g.as_deref_mut() {
            for (gi, si) in g.iter_mut().zip(scratch.iter()) {
                *gi += si / k;
            }
        }
        for (xi, si) in w.x.iter_mut().zip(scratch.iter()) {
            *xi -= eta * si;
        }
    }
}

/// Aggregate gradients observed during one local step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradients {
    /// `g_t = (1/K) Σ_k ĝ_t^k` (stochastic)
    pub g: Vec<f64>,
    /// `ḡ_t = (1/K) Σ_k ∇f(x_t^k)` (exact)
    pub g_bar: Vec<f64>,
}

/// Takes one local step on every worker at step `t` (no averaging) and returns `g_t`, `ḡ_t`.
pub fn step_once(
    states: &mut [WorkerState],
    t: usize,
    config: &RunConfig,
    objective: &dyn Objective,
) -> Result<StepGradients> {
    let d = objective.dim();
    if states.is_empty() {
        return Err(Error::invalid("no worker states"));
    }
    for s in states.iter() {
        check_dim(objective, &s.x)?;
    }
    let mut g_bar = vec![0.0; d];
    for s in states.iter() {
        let full = objective.gradient(&s.x);
        for (a, b) in g_bar.iter_mut().zip(&full) {
            *a += b / states.len() as f64;
        }
    }
    let mut g = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    local_step(
        states,
        config.stepsize.at(t),
        config.batch,
        objective,
        &mut scratch,
        Some(&mut g),
    );
    Ok(StepGradients { g, g_bar })
}

/// Sets every worker to the mean of all worker iterates.
pub fn synchronize(states: &mut [WorkerState]) {
    let d = states[0].x.len();
    let mean = mean_of(states.iter().map(|s| &s.x), d);
    for s in states.iter_mut() {
        s.x.copy_from_slice(&mean);
    }
}

/// `x̄ = (1/K) Σ_k x^k`, summed in ascending worker order.
pub fn virtual_average(states: &[WorkerState]) -> Vec<f64> {
    let d = states.first().map_or(0, |s| s.x.len());
    mean_of(states.iter().map(|s| &s.x), d)
}

/// `(1/K) Σ_k ‖x̄ − x^k‖²`.
pub(crate) fn deviation(mean: &[f64], iterates: &[&[f64]]) -> f64 {
    iterates.iter().map(|x| dist_sq(mean, x)).sum::<f64>() / iterates.len() as f64
}

/// Function values of the four tracked averages at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub step: usize,
    /// last, uniform, linear, quadratic (weights `(t+1)²`)
    pub values: [f64; 4],
}

impl Evaluation {
    pub fn best(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub workers: usize,
    /// Configured horizon `T`.
    pub horizon: usize,
    /// Last step reached; smaller than `horizon` when a stop rule fired.
    pub completed_steps: usize,
    /// Synchronization rounds performed.
    pub comm_rounds: usize,
    /// `(1/K) Σ_k ‖x̄_t − x_t^k‖²` for `t = 0..=completed_steps`.
    pub deviation: Vec<f64>,
    /// `x̄_t` for `t = 0..=completed_steps` when recorded.
    pub virtual_seq: Option<Vec<Vec<f64>>>,
    /// `iterates[t][k]` when recorded.
    pub iterates: Option<Vec<Vec<Vec<f64>>>>,
    pub evaluations: Vec<Evaluation>,
    /// Final last/uniform/linear/quadratic averages of `x̄_t`.
    pub averages: [Vec<f64>; 4],
    /// `x̂_T` with weights `(a+t)²`, `t < T`, when the stepsize is the theorem schedule.
    pub theorem_average: Option<Vec<f64>>,
    /// `x̄` at `completed_steps`.
    pub final_mean: Vec<f64>,
    pub stopped_at: Option<usize>,
}

/// Per-step bookkeeping shared by the synchronous and asynchronous engines.
pub(crate) struct TraceBuilder<'a> {
    objective: &'a dyn Objective,
    horizon: usize,
    record: RecordOptions,
    eval: EvalPolicy,
    stop: Option<StopRule>,
    averages: Vec<RunningAverage>,
    theorem: Option<(f64, WeightedAccumulator)>,
    deviation: Vec<f64>,
    virtual_seq: Vec<Vec<f64>>,
    iterates: Vec<Vec<Vec<f64>>>,
    evaluations: Vec<Evaluation>,
    last_eval: Option<usize>,
}

impl<'a> TraceBuilder<'a> {
    pub(crate) fn new(
        objective: &'a dyn Objective,
        horizon: usize,
        record: RecordOptions,
        eval: EvalPolicy,
        stop: Option<StopRule>,
        shift: Option<f64>,
    ) -> Self {
        let d = objective.dim();
        TraceBuilder {
            objective,
            horizon,
            record,
            eval,
            stop,
            averages: AveragingScheme::TRACKED
                .iter()
                .map(|&s| RunningAverage::new(s, d))
                .collect(),
            theorem: shift.map(|a| (a, WeightedAccumulator::new(d))),
            deviation: Vec::new(),
            virtual_seq: Vec::new(),
            iterates: Vec::new(),
            evaluations: Vec::new(),
            last_eval: None,
        }
    }

    /// Records step `t`; returns `true` when the stop rule fired.
    pub(crate) fn observe(&mut self, t: usize, mean: &[f64], iterates: &[&[f64]], sync: &SyncSchedule) -> bool {
        self.deviation.push(deviation(mean, iterates));
        for avg in &mut self.averages {
            avg.absorb(mean);
        }
        if t < self.horizon {
            if let Some((a, acc)) = self.theorem.as_mut() {
                let w = (*a + t as f64) * (*a + t as f64);
                acc.add(w, &mean_of(iterates.iter().copied(), mean.len()));
            }
        }
        if self.record.virtual_seq {
            self.virtual_seq.push(mean.to_vec());
        }
        if self.record.iterates {
            self.iterates.push(iterates.iter().map(|x| x.to_vec()).collect());
        }
        let synced = iterates.len() == 1 || sync.contains(t);
        if self.eval.due(t, self.horizon, self.last_eval, synced) {
            let mut values = [0.0; 4];
            for (v, avg) in values.iter_mut().zip(&self.averages) {
                *v = self.objective.value(avg.value());
            }
            let e = Evaluation { step: t, values };
            self.evaluations.push(e);
            self.last_eval = Some(t);
            if let Some(stop) = self.stop {
                if e.best() - stop.f_star <= stop.eps {
                    return true;
                }
            }
        }
        false
    }

    pub(crate) fn finish(
        self,
        workers: usize,
        completed_steps: usize,
        comm_rounds: usize,
        final_mean: Vec<f64>,
        stopped: bool,
    ) -> RunTrace {
        let averages: Vec<Vec<f64>> = self.averages.iter().map(|a| a.value().to_vec()).collect();
        let averages: [Vec<f64>; 4] = averages.try_into().expect("four tracked averages");
        RunTrace {
            workers,
            horizon: self.horizon,
            completed_steps,
            comm_rounds,
            deviation: self.deviation,
            virtual_seq: self.record.virtual_seq.then_some(self.virtual_seq),
            iterates: self.record.iterates.then_some(self.iterates),
            evaluations: self.evaluations,
            averages,
            theorem_average: self.theorem.map(|(_, acc)| acc.mean()),
            final_mean,
            stopped_at: stopped.then_some(completed_steps),
        }
    }
}

/// Runs synchronous local SGD.
///
/// Each worker draws its mini-batch indices uniformly with replacement from its own
/// substream of the master seed. At every `t + 1 ∈ I_T` all workers are set to the
/// average of their post-step iterates.
pub fn run_local_sgd(config: &RunConfig, objective: &dyn Objective) -> Result<RunTrace> {
    config.validate(objective)?;
    let d = objective.dim();
    let mut states = initial_states(config, d);
    let mut scratch = vec![0.0; d];
    let mut trace = TraceBuilder::new(
        objective,
        config.steps,
        config.record,
        config.eval,
        config.stop,
        config.stepsize.shift(),
    );

    let mut t = 0;
    let mut stopped;
    loop {
        let mean = virtual_average(&states);
        let views: Vec<&[f64]> = states.iter().map(|s| s.x.as_slice()).collect();
        stopped = trace.observe(t, &mean, &views, &config.sync);
        if stopped || t == config.steps {
            let rounds = config.sync.count_up_to(t);
            return Ok(trace.finish(config.workers, t, rounds, mean, stopped));
        }
        local_step(
            &mut states,
            config.stepsize.at(t),
            config.batch,
            objective,
            &mut scratch,
            None,
        );
        if config.sync.contains(t + 1) {
            synchronize(&mut states);
        }
        t += 1;
    }
}

/// Plain mini-batch SGD with batch `K·b`, drawing the `K` substreams of `seed` in worker
/// order (`b` indices each) per step. Returns `x_0..=x_T`.
pub fn run_minibatch_sgd(
    objective: &dyn Objective,
    workers: usize,
    batch: usize,
    steps: usize,
    stepsize: &StepSchedule,
    seed: u64,
    x0: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    if workers == 0 || batch == 0 {
        return Err(Error::invalid("need K >= 1 and b >= 1"));
    }
    let d = objective.dim();
    let mut x = x0.map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
    check_dim(objective, &x)?;
    let mut streams: Vec<ChaCha8Rng> = (0..workers).map(|k| worker_rng(seed, k)).collect();
    let n = objective.num_components();
    let scale = 1.0 / (workers * batch) as f64;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(x.clone());
    let mut g = vec![0.0; d];
    for t in 0..steps {
        g.iter_mut().for_each(|v| *v = 0.0);
        for rng in streams.iter_mut() {
            for _ in 0..batch {
                let i = rng.random_range(0..n);
                objective.add_component_gradient(&x, i, scale, &mut g);
            }
        }
        let eta = stepsize.at(t);
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Smallest evaluated step at which any tracked average satisfies `f − f★ ≤ eps`.
pub fn iterations_to_accuracy(trace: &RunTrace, eps: f64, f_star: f64) -> Result<Option<usize>> {
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive"));
    }
    Ok(trace
        .evaluations
        .iter()
        .find(|e| e.best() - f_star <= eps)
        .map(|e| e.step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{make_quadratic, Quadratic};

    fn half_square() -> Quadratic {
        // f_i(x) = ½x² for every component
        Quadratic::new(vec![1.0], vec![vec![0.0]; 3]).unwrap()
    }

    #[test]
    fn hand_computed_two_worker_step() {
        let q = half_square();
        let cfg = RunConfig::new(
            2,
            SyncSchedule::regular(1, 1).unwrap(),
            StepSchedule::constant(1.0).unwrap(),
            0,
        )
        .with_x0(vec![2.0])
        .with_record(RecordOptions {
            iterates: true,
            virtual_seq: true,
        });
        let tr = run_local_sgd(&cfg, &q).unwrap();
        let its = tr.iterates.unwrap();
        assert_eq!(its[1], vec![vec![0.0], vec![0.0]]);
        assert_eq!(tr.final_mean, vec![0.0]);
        assert_eq!(tr.comm_rounds, 1);
    }

    #[test]
    fn virtual_average_examples() {
        let a = WorkerState::new(0, vec![1.0], 0);
        let b = WorkerState::new(1, vec![3.0], 0);
        assert_eq!(virtual_average(&[a.clone(), b]), vec![2.0]);
        assert_eq!(virtual_average(&[a.clone(), a]), vec![1.0]);
    }

    #[test]
    fn step_once_identities() {
        let (q, _, _) = make_quadratic(3, 1.0, 2.0, 5, 1.0, 4).unwrap();
        let cfg = RunConfig::new(
            3,
            SyncSchedule::regular(10, 5).unwrap(),
            StepSchedule::constant(0.1).unwrap(),
            9,
        );
        let mut states = initial_states(&cfg, 3);
        states[1].x = vec![1.0, -2.0, 0.5];
        let before = virtual_average(&states);
        let grads = step_once(&mut states, 0, &cfg, &q).unwrap();
        let after = virtual_average(&states);
        for j in 0..3 {
            assert!((after[j] - (before[j] - 0.1 * grads.g[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn iterations_to_accuracy_scans_evaluations() {
        let mut tr = RunTrace {
            workers: 1,
            horizon: 10,
            completed_steps: 10,
            comm_rounds: 0,
            deviation: vec![],
            virtual_seq: None,
            iterates: None,
            evaluations: vec![],
            averages: Default::default(),
            theorem_average: None,
            final_mean: vec![],
            stopped_at: None,
        };
        for t in 0..=10 {
            let f = 1.0 - 0.1 * t as f64;
            tr.evaluations.push(Evaluation {
                step: t,
                values: [f, f + 0.5, f + 0.5, f + 0.5],
            });
        }
        assert_eq!(iterations_to_accuracy(&tr, 0.45, 0.0).unwrap(), Some(6));
        assert_eq!(iterations_to_accuracy(&tr, 5.0, 0.0).unwrap(), Some(0));
        assert_eq!(iterations_to_accuracy(&tr, 0.01, -10.0).unwrap(), None);
        assert!(iterations_to_accuracy(&tr, 0.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        let (q, _, c) = make_quadratic(2, 1.0, 4.0, 4, 0.0, 1).unwrap();
        let sync = SyncSchedule::regular(100, 4).unwrap();
        let ok = StepSchedule::theorem_decay(1.0, 16.0 * c.kappa + 1.0).unwrap();
        assert!(RunConfig::new(2, sync.clone(), ok, 0).validate(&q).is_ok());
        let bad = StepSchedule::theorem_decay(1.0, 16.0 * c.kappa).unwrap();
        assert!(RunConfig::new(2, sync.clone(), bad, 0).validate(&q).is_err());
        assert!(RunConfig::new(0, sync.clone(), ok, 0).validate(&q).is_err());
        assert!(RunConfig::new(2, sync.clone(), ok, 0)
            .with_x0(vec![0.0; 3])
            .validate(&q)
            .is_err());
        let mut cfg = RunConfig::new(2, sync, ok, 0);
        cfg.steps = 50;
        assert!(cfg.validate(&q).is_err());
    }

    #[test]
    fn stop_rule_halts_early() {
        let (q, sol, _) = make_quadratic(2, 1.0, 2.0, 4, 0.0, 3).unwrap();
        let cfg = RunConfig::new(
            1,
            SyncSchedule::regular(1000, 1).unwrap(),
            StepSchedule::constant(0.5).unwrap(),
            0,
        )
        .with_eval(EvalPolicy::Every {
            every: 1,
            at_sync: false,
        })
        .with_stop(StopRule {
            eps: 1e-6,
            f_star: sol.f_star,
        });
        let tr = run_local_sgd(&cfg, &q).unwrap();
        let t = tr.stopped_at.unwrap();
        assert!(t < 1000);
        assert_eq!(tr.completed_steps, t);
        assert_eq!(iterations_to_accuracy(&tr, 1e-6, sol.f_star).unwrap(), Some(t));
    }
}
