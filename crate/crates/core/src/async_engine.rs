//! Asynchronous local SGD simulated on a deterministic event queue.
//!
//! `K` logical sequences are advanced by `K` physical workers in blocks delimited by each
//! sequence's own synchronization set. At the end of a block the worker atomically adds
//! `(1/K)(x_end − x_start)` to the shared aggregate; the next block of that sequence starts
//! from the aggregate as seen by whichever worker picks it up. A worker sees its own writes
//! immediately and other workers' writes once they land, after the transport lag of the
//! [`DelayModel`].

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::mean_of;
use crate::objectives::{check_dim, Objective};
use crate::schedules::SyncSchedule;
use crate::sync_engine::{minibatch_gradient, validate_stepsize, RunConfig, RunTrace, TraceBuilder};
use crate::worker_rng;

/// Transport lag of a write to workers other than its author, in base steps (the time a
/// rate-1 worker needs for one local step).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayKind {
    Zero,
    Fixed {
        lag: u64,
    },
    /// Lag of each write drawn uniformly from `{0, …, max_lag}`.
    RandomBounded {
        max_lag: u64,
        seed: u64,
    },
}

/// A transport model together with the staleness bound `τ` the run must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayModel {
    pub kind: DelayKind,
    /// Declared maximum staleness in steps; a read missing any update older than
    /// `t − τ` aborts the run.
    pub tau: usize,
}

impl DelayModel {
    pub fn zero() -> Self {
        DelayModel {
            kind: DelayKind::Zero,
            tau: 0,
        }
    }

    pub fn fixed(lag: u64, tau: usize) -> Self {
        DelayModel {
            kind: DelayKind::Fixed { lag },
            tau,
        }
    }

    pub fn random_bounded(max_lag: u64, seed: u64, tau: usize) -> Self {
        DelayModel {
            kind: DelayKind::RandomBounded { max_lag, seed },
            tau,
        }
    }

    pub fn with_tau(mut self, tau: usize) -> Self {
        self.tau = tau;
        self
    }
}

/// How logical sequences are mapped to physical workers with relative step rates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    /// Worker `k` always advances sequence `k`.
    Dedicated { speeds: Vec<u32> },
    /// A free worker advances the idle sequence with the smallest assigned frontier,
    /// preferring its own sequence on ties.
    Balanced { speeds: Vec<u32> },
}

impl Placement {
    pub fn uniform(workers: usize) -> Self {
        Placement::Dedicated {
            speeds: vec![1; workers],
        }
    }

    pub fn speeds(&self) -> &[u32] {
        match self {
            Placement::Dedicated { speeds } | Placement::Balanced { speeds } => speeds,
        }
    }
}

/// One block of local steps `[start_step, end_step)` of `sequence`, run by `worker`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockAssignment {
    pub worker: usize,
    pub sequence: usize,
    pub start_step: usize,
    pub end_step: usize,
    pub start_time: u64,
    pub end_time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentPlan {
    /// Blocks in order of assignment.
    pub blocks: Vec<BlockAssignment>,
    /// Largest difference, over time, between the furthest assigned step of any sequence
    /// and the least completed step of any sequence.
    pub lag_bound: usize,
    /// Ticks per base step.
    pub ticks_per_step: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn plan_blocks(speeds: &[u32], blocks: &[Vec<(usize, usize)>], balanced: bool) -> Result<AssignmentPlan> {
    if speeds.is_empty() || speeds.contains(&0) {
        return Err(Error::invalid("worker speeds must be positive"));
    }
    if speeds.len() != blocks.len() {
        return Err(Error::invalid(format!(
            "{} worker speeds for {} sequences",
            speeds.len(),
            blocks.len()
        )));
    }
    let lcm = speeds.iter().fold(1u64, |acc, &s| acc / gcd(acc, s as u64) * s as u64);
    let cost: Vec<u64> = speeds.iter().map(|&s| lcm / s as u64).collect();
    let k = blocks.len();
    // a balanced worker idles rather than push a sequence this far past the slowest one
    let window = 3 * blocks.iter().flatten().map(|(s, e)| e - s).max().unwrap_or(0);

    let mut next_block = vec![0usize; k];
    let mut assigned = vec![0usize; k];
    let mut completed = vec![0usize; k];
    let mut busy = vec![false; k];
    // worker -> (sequence, end_step, end_time)
    let mut running: Vec<Option<(usize, usize, u64)>> = vec![None; k];
    let mut out = Vec::new();
    let mut lag_bound = 0;
    let mut now = 0u64;

    loop {
        for slot in running.iter_mut() {
            if let Some((h, end, t)) = *slot {
                if t == now {
                    completed[h] = end;
                    busy[h] = false;
                    *slot = None;
                }
            }
        }
        for p in 0..k {
            if running[p].is_some() {
                continue;
            }
            let choice = if balanced {
                let mut best: Option<usize> = None;
                let trail = completed.iter().min().copied().unwrap_or(0);
                for h in 0..k {
                    if busy[h] || next_block[h] == blocks[h].len() || blocks[h][next_block[h]].1 > trail + window {
                        continue;
                    }
                    best = match best {
                        None => Some(h),
                        Some(b) if assigned[h] < assigned[b] || (assigned[h] == assigned[b] && h == p) => Some(h),
                        keep => keep,
                    };
                }
                best
            } else {
                (!busy[p] && next_block[p] < blocks[p].len()).then_some(p)
            };
            if let Some(h) = choice {
                let (s, e) = blocks[h][next_block[h]];
                next_block[h] += 1;
                assigned[h] = e;
                busy[h] = true;
                let end_time = now + cost[p] * (e - s) as u64;
                running[p] = Some((h, e, end_time));
                out.push(BlockAssignment {
                    worker: p,
                    sequence: h,
                    start_step: s,
                    end_step: e,
                    start_time: now,
                    end_time,
                });
            }
        }
        let lead = assigned.iter().max().copied().unwrap_or(0);
        let trail = completed.iter().min().copied().unwrap_or(0);
        lag_bound = lag_bound.max(lead - trail);
        match running.iter().flatten().map(|r| r.2).min() {
            Some(t) => now = t,
            None => break,
        }
    }
    Ok(AssignmentPlan {
        blocks: out,
        lag_bound,
        ticks_per_step: lcm,
    })
}

/// Load-balanced schedule for `speeds.len()` sequences that each synchronize every `h`
/// steps up to `horizon`.
pub fn load_balanced_assignment(speeds: &[u32], h: usize, horizon: usize) -> Result<AssignmentPlan> {
    let sync = SyncSchedule::regular(horizon, h)?;
    let blocks = vec![sync.blocks(); speeds.len()];
    plan_blocks(speeds, &blocks, true)
}

/// Schedule of blocks for a placement and per-sequence synchronization sets.
pub fn assignment_plan(placement: &Placement, syncs: &[SyncSchedule]) -> Result<AssignmentPlan> {
    let blocks: Vec<_> = syncs.iter().map(SyncSchedule::blocks).collect();
    match placement {
        Placement::Dedicated { speeds } => plan_blocks(speeds, &blocks, false),
        Placement::Balanced { speeds } => plan_blocks(speeds, &blocks, true),
    }
}

/// An atomic addition of the updates of steps `[start, end)` of `sequence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteRecord {
    pub sequence: usize,
    pub start: usize,
    pub end: usize,
    /// Physical worker that performed the write.
    pub writer: usize,
    pub time: u64,
    /// Time from which other workers see the write.
    pub land: u64,
}

/// A read of the aggregate that becomes `x_step` of `sequence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReadRecord {
    pub sequence: usize,
    pub step: usize,
    pub reader: usize,
    pub time: u64,
}

/// Realized writes and reads; the visibility sets `W_t^{k,h}` are derived from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WriteLog {
    pub sequences: usize,
    pub horizon: usize,
    pub writes: Vec<WriteRecord>,
    pub reads: Vec<ReadRecord>,
}

impl WriteLog {
    pub fn new(sequences: usize, horizon: usize) -> Self {
        WriteLog {
            sequences,
            horizon,
            writes: Vec::new(),
            reads: Vec::new(),
        }
    }

    pub fn push_write(&mut self, w: WriteRecord) {
        self.writes.push(w);
    }

    pub fn push_read(&mut self, r: ReadRecord) {
        self.reads.push(r);
    }

    fn visible(w: &WriteRecord, r: &ReadRecord) -> bool {
        (w.writer == r.reader && w.time <= r.time) || w.land <= r.time
    }

    /// Steps of sequence `h` whose updates are visible to `read`.
    pub fn w_set(&self, read: &ReadRecord, h: usize) -> BTreeSet<usize> {
        self.writes
            .iter()
            .filter(|w| w.sequence == h && Self::visible(w, read))
            .flat_map(|w| w.start..w.end)
            .collect()
    }

    /// Every sequence has written all of `[0, T)` and read at `T`.
    pub fn check_complete(&self) -> Result<()> {
        for h in 0..self.sequences {
            let mut covered: Vec<(usize, usize)> = self
                .writes
                .iter()
                .filter(|w| w.sequence == h)
                .map(|w| (w.start, w.end))
                .collect();
            covered.sort_unstable();
            let mut frontier = 0;
            for (s, e) in covered {
                if s > frontier {
                    break;
                }
                frontier = frontier.max(e);
            }
            if frontier < self.horizon {
                return Err(Error::IncompleteLog {
                    sequence: h,
                    step: frontier,
                });
            }
            if !self.reads.iter().any(|r| r.sequence == h && r.step == self.horizon) {
                return Err(Error::IncompleteLog {
                    sequence: h,
                    step: self.horizon,
                });
            }
        }
        Ok(())
    }

    /// Visibility sets only grow along the reads of each physical worker.
    pub fn is_monotone(&self) -> bool {
        let mut readers: BTreeMap<usize, Vec<&ReadRecord>> = BTreeMap::new();
        for r in &self.reads {
            readers.entry(r.reader).or_default().push(r);
        }
        readers.values_mut().all(|rs| {
            rs.sort_by_key(|r| r.time);
            rs.windows(2)
                .all(|pair| (0..self.sequences).all(|h| self.w_set(pair[0], h).is_subset(&self.w_set(pair[1], h))))
        })
    }
}

/// Smallest `τ'` with `W_t^{k,h} ⊇ {j : j < t − τ'}` for every read and every `h`.
pub fn measured_delay(log: &WriteLog) -> Result<usize> {
    log.check_complete()?;
    let mut worst = 0;
    for r in &log.reads {
        for h in 0..log.sequences {
            let seen = log.w_set(r, h);
            let first_missing = (0..r.step).find(|j| !seen.contains(j));
            if let Some(j) = first_missing {
                worst = worst.max(r.step - j);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncRun {
    pub trace: RunTrace,
    pub log: WriteLog,
    pub plan: AssignmentPlan,
    /// Aggregate after every write has been applied.
    pub aggregate: Vec<f64>,
    /// Largest staleness observed by any read.
    pub measured_delay: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Write,
    Land,
    Read,
    FinalRead,
}

#[derive(Default)]
struct Slot {
    iterates: Vec<Option<Vec<f64>>>,
    updates: Vec<Option<Vec<f64>>>,
}

/// Contiguous prefix of visible steps per (reader, sequence), with out-of-order blocks parked.
struct Visibility {
    prefix: usize,
    parked: BTreeMap<usize, usize>,
}

impl Visibility {
    fn insert(&mut self, start: usize, end: usize) {
        self.parked.insert(start, end);
        while let Some(e) = self.parked.remove(&self.prefix) {
            self.prefix = e;
        }
    }
}

/// Runs asynchronous local SGD with one synchronization set per sequence.
///
/// `config.sync` is ignored in favour of `per_worker_syncs`; the stepsize precondition is
/// checked against the largest gap bound plus the declared `τ`.
pub fn run_async_local_sgd(
    config: &RunConfig,
    per_worker_syncs: &[SyncSchedule],
    delay: DelayModel,
    placement: &Placement,
    objective: &dyn Objective,
) -> Result<AsyncRun> {
    let k = config.workers;
    let horizon = config.steps;
    if k == 0 || horizon == 0 || config.batch == 0 {
        return Err(Error::invalid("need K >= 1, T >= 1 and b >= 1"));
    }
    if per_worker_syncs.len() != k {
        return Err(Error::invalid(format!(
            "{} synchronization sets for {k} workers",
            per_worker_syncs.len()
        )));
    }
    if let Some(s) = per_worker_syncs.iter().find(|s| s.horizon() != horizon) {
        return Err(Error::invalid(format!(
            "synchronization horizon {} differs from T = {horizon}",
            s.horizon()
        )));
    }
    if placement.speeds().len() != k {
        return Err(Error::invalid(format!(
            "{} worker speeds for {k} workers",
            placement.speeds().len()
        )));
    }
    if config.stop.is_some() {
        return Err(Error::invalid("stop rules are not supported for asynchronous runs"));
    }
    let h_max = per_worker_syncs.iter().map(SyncSchedule::gap_bound).max().unwrap_or(1);
    validate_stepsize(&config.stepsize, objective, h_max, delay.tau)?;
    let d = objective.dim();
    let x0 = config.start_point(d);
    check_dim(objective, &x0)?;

    let plan = assignment_plan(placement, per_worker_syncs)?;
    let tick = plan.ticks_per_step;

    // lags drawn in order of write time, then worker
    let mut order: Vec<usize> = (0..plan.blocks.len()).collect();
    order.sort_by_key(|&i| (plan.blocks[i].end_time, plan.blocks[i].worker));
    let mut lags = vec![0u64; plan.blocks.len()];
    let mut lag_rng = match delay.kind {
        DelayKind::RandomBounded { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        _ => None,
    };
    for &i in &order {
        lags[i] = match delay.kind {
            DelayKind::Zero => 0,
            DelayKind::Fixed { lag } => lag * tick,
            DelayKind::RandomBounded { max_lag, .. } => {
                lag_rng.as_mut().expect("seeded").random_range(0..=max_lag) * tick
            }
        };
    }

    // the run terminates once every write has landed everywhere
    let flush = plan
        .blocks
        .iter()
        .zip(&lags)
        .map(|(b, l)| b.end_time + l)
        .max()
        .unwrap_or(0);
    let mut events: Vec<(u64, EventKind, usize, usize)> = Vec::with_capacity(plan.blocks.len() * 4);
    for (i, b) in plan.blocks.iter().enumerate() {
        events.push((b.start_time, EventKind::Read, b.worker, i));
        events.push((b.end_time, EventKind::Write, b.worker, i));
        events.push((b.end_time + lags[i], EventKind::Land, b.worker, i));
        if b.end_step == horizon {
            events.push((flush, EventKind::FinalRead, b.worker, i));
        }
    }
    events.sort();

    let union: BTreeSet<usize> = per_worker_syncs
        .iter()
        .flat_map(|s| s.indices().iter().copied())
        .collect();
    let eval_sync = SyncSchedule::new(horizon, union.into_iter().collect(), h_max)?;
    let mut trace = TraceBuilder::new(
        objective,
        horizon,
        config.record,
        config.eval,
        None,
        config.stepsize.shift(),
    );

    let mut rngs: Vec<ChaCha8Rng> = (0..k).map(|h| worker_rng(config.seed, h)).collect();
    let mut views: Vec<Vec<f64>> = vec![x0.clone(); k];
    let mut aggregate = x0.clone();
    let mut vis: Vec<Vec<Visibility>> = (0..k)
        .map(|_| {
            (0..k)
                .map(|_| Visibility {
                    prefix: 0,
                    parked: BTreeMap::new(),
                })
                .collect()
        })
        .collect();
    let mut pending: Vec<Option<Vec<f64>>> = vec![None; plan.blocks.len()];
    let mut last_end: Vec<Vec<f64>> = vec![x0.clone(); k];
    let mut slots: BTreeMap<usize, Slot> = BTreeMap::new();
    let mut log = WriteLog::new(k, horizon);
    let mut worst_delay = 0;
    let kf = k as f64;

    fn put(
        slots: &mut BTreeMap<usize, Slot>,
        k: usize,
        t: usize,
        h: usize,
        iterate: Option<Vec<f64>>,
        update: Option<Vec<f64>>,
    ) {
        let s = slots.entry(t).or_insert_with(|| Slot {
            iterates: vec![None; k],
            updates: vec![None; k],
        });
        if let Some(x) = iterate {
            s.iterates[h] = Some(x);
        }
        if let Some(u) = update {
            s.updates[h] = Some(u);
        }
    }
    for h in 0..k {
        put(&mut slots, k, 0, h, Some(x0.clone()), None);
    }

    let mut scratch = vec![0.0; d];
    let mut next_obs = 0usize;
    let mut virtual_x = x0.clone();

    let check_read = |vis: &Vec<Vec<Visibility>>,
                      log: &mut WriteLog,
                      seq: usize,
                      step: usize,
                      reader: usize,
                      time: u64|
     -> Result<usize> {
        log.push_read(ReadRecord {
            sequence: seq,
            step,
            reader,
            time,
        });
        let mut worst = 0;
        for (h, v) in vis[reader].iter().enumerate() {
            if v.prefix < step {
                let stale = step - v.prefix;
                if stale > delay.tau {
                    return Err(Error::DelayViolation {
                        sequence: seq,
                        step,
                        writer: h,
                        missing: v.prefix,
                        measured: stale,
                        declared: delay.tau,
                    });
                }
                worst = worst.max(stale);
            }
        }
        Ok(worst)
    };

    for &(time, kind, worker, i) in &events {
        let b = plan.blocks[i];
        let seq = b.sequence;
        match kind {
            EventKind::Read => {
                let x_start = if b.start_step == 0 {
                    x0.clone()
                } else {
                    worst_delay = worst_delay.max(check_read(&vis, &mut log, seq, b.start_step, worker, time)?);
                    let x = if k == 1 {
                        last_end[seq].clone()
                    } else {
                        views[worker].clone()
                    };
                    put(&mut slots, k, b.start_step, seq, Some(x.clone()), None);
                    x
                };
                let mut x = x_start.clone();
                for t in b.start_step..b.end_step {
                    if t > b.start_step {
                        put(&mut slots, k, t, seq, Some(x.clone()), None);
                    }
                    minibatch_gradient(objective, &x, config.batch, &mut rngs[seq], &mut scratch);
                    let eta = config.stepsize.at(t);
                    let update: Vec<f64> = scratch.iter().map(|g| eta * g).collect();
                    for (xi, si) in x.iter_mut().zip(&scratch) {
                        *xi -= eta * si;
                    }
                    put(&mut slots, k, t, seq, None, Some(update));
                }
                let delta: Vec<f64> = x.iter().zip(&x_start).map(|(e, s)| (e - s) / kf).collect();
                pending[i] = Some(delta);
                last_end[seq] = x;
            }
            EventKind::Write => {
                let delta = pending[i].as_ref().expect("block computed before its write");
                for (v, u) in views[worker].iter_mut().zip(delta) {
                    *v += u;
                }
                for (v, u) in aggregate.iter_mut().zip(delta) {
                    *v += u;
                }
                vis[worker][seq].insert(b.start_step, b.end_step);
                log.push_write(WriteRecord {
                    sequence: seq,
                    start: b.start_step,
                    end: b.end_step,
                    writer: worker,
                    time,
                    land: b.end_time + lags[i],
                });
            }
            EventKind::Land => {
                let delta = pending[i].as_ref().expect("block computed before it lands");
                for q in (0..k).filter(|&q| q != worker) {
                    for (v, u) in views[q].iter_mut().zip(delta) {
                        *v += u;
                    }
                    vis[q][seq].insert(b.start_step, b.end_step);
                }
            }
            EventKind::FinalRead => {
                worst_delay = worst_delay.max(check_read(&vis, &mut log, seq, horizon, worker, time)?);
                let x = if k == 1 {
                    last_end[seq].clone()
                } else {
                    views[worker].clone()
                };
                put(&mut slots, k, horizon, seq, Some(x), None);
            }
        }

        // emit every step whose iterates and preceding updates are all known
        while next_obs <= horizon {
            let ready = slots
                .get(&next_obs)
                .is_some_and(|s| s.iterates.iter().all(Option::is_some));
            if !ready {
                break;
            }
            if next_obs < horizon && !slots[&next_obs].updates.iter().all(Option::is_some) {
                break;
            }
            let s = slots.remove(&next_obs).expect("checked");
            let its: Vec<Vec<f64>> = s.iterates.into_iter().map(|x| x.expect("checked")).collect();
            let views_t: Vec<&[f64]> = its.iter().map(Vec::as_slice).collect();
            trace.observe(next_obs, &virtual_x, &views_t, &eval_sync);
            if next_obs < horizon {
                let ups: Vec<Vec<f64>> = s.updates.into_iter().map(|u| u.expect("checked")).collect();
                let step = mean_of(&ups, d);
                for (v, u) in virtual_x.iter_mut().zip(&step) {
                    *v -= u;
                }
            }
            next_obs += 1;
        }
    }
    if next_obs <= horizon {
        return Err(Error::IncompleteLog {
            sequence: 0,
            step: next_obs,
        });
    }

    let rounds = per_worker_syncs.iter().map(|s| s.indices().len()).max().unwrap_or(0);
    let trace = trace.finish(k, horizon, rounds, virtual_x, false);
    Ok(AsyncRun {
        trace,
        log,
        plan,
        aggregate,
        measured_delay: worst_delay,
    })
}

/// Regular schedule with gap `h` whose syncs are shifted by `offset`; the horizon is always a sync.
pub fn staggered_schedule(horizon: usize, h: usize, offset: usize) -> Result<SyncSchedule> {
    if h == 0 {
        return Err(Error::invalid("staggered schedule needs h >= 1"));
    }
    let mut idx: Vec<usize> = (0..)
        .map(|m| offset % h + m * h)
        .skip_while(|&i| i == 0)
        .take_while(|&i| i < horizon)
        .collect();
    idx.push(horizon);
    SyncSchedule::new(horizon, idx, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::make_quadratic;
    use crate::schedules::StepSchedule;
    use crate::sync_engine::{run_local_sgd, RecordOptions};

    #[test]
    fn equal_speeds_identity_assignment() {
        let plan = load_balanced_assignment(&[1, 1, 1], 4, 20).unwrap();
        assert_eq!(plan.lag_bound, 4);
        assert!(plan.blocks.iter().all(|b| b.worker == b.sequence));
        let single = load_balanced_assignment(&[3], 5, 20).unwrap();
        assert_eq!(single.lag_bound, 5);
        assert!(single.blocks.iter().all(|b| b.worker == 0 && b.sequence == 0));
    }

    #[test]
    fn fast_worker_helps_slow_sequence() {
        let h = 4;
        let plan = load_balanced_assignment(&[2, 1], h, 40 * h).unwrap();
        assert!(plan.lag_bound <= 3 * h);
        assert!(plan.blocks.iter().any(|b| b.worker == 0 && b.sequence == 1));
        let done: Vec<u64> = (0..2)
            .map(|s| {
                plan.blocks
                    .iter()
                    .filter(|b| b.sequence == s)
                    .map(|b| b.end_time)
                    .max()
                    .unwrap()
            })
            .collect();
        let gap = done[0].abs_diff(done[1]);
        assert!(gap <= 2 * h as u64 * plan.ticks_per_step);
    }

    #[test]
    fn hand_built_log_delay() {
        let mut log = WriteLog::new(2, 4);
        // sequence 1 writes steps 0..2 at time 2, others see it at time 4
        log.push_write(WriteRecord {
            sequence: 1,
            start: 0,
            end: 2,
            writer: 1,
            time: 2,
            land: 4,
        });
        log.push_write(WriteRecord {
            sequence: 0,
            start: 0,
            end: 4,
            writer: 0,
            time: 3,
            land: 3,
        });
        log.push_write(WriteRecord {
            sequence: 1,
            start: 2,
            end: 4,
            writer: 1,
            time: 4,
            land: 4,
        });
        log.push_read(ReadRecord {
            sequence: 0,
            step: 2,
            reader: 0,
            time: 3,
        });
        log.push_read(ReadRecord {
            sequence: 0,
            step: 4,
            reader: 0,
            time: 4,
        });
        log.push_read(ReadRecord {
            sequence: 1,
            step: 4,
            reader: 1,
            time: 4,
        });
        assert_eq!(measured_delay(&log).unwrap(), 2);
        assert!(log.is_monotone());
        let mut partial = WriteLog::new(2, 4);
        partial.push_write(WriteRecord {
            sequence: 0,
            start: 0,
            end: 4,
            writer: 0,
            time: 1,
            land: 1,
        });
        assert!(matches!(
            measured_delay(&partial),
            Err(Error::IncompleteLog { sequence: 0, .. })
        ));
    }

    #[test]
    fn zero_delay_aligned_matches_sync() {
        let (q, _, c) = make_quadratic(4, 1.0, 3.0, 20, 0.5, 2).unwrap();
        let sync = SyncSchedule::regular(60, 4).unwrap();
        let step = StepSchedule::theorem_decay(1.0, 16.0 * c.kappa + 1.0).unwrap();
        let cfg = RunConfig::new(3, sync.clone(), step, 5).with_record(RecordOptions {
            iterates: true,
            virtual_seq: true,
        });
        let s = run_local_sgd(&cfg, &q).unwrap();
        let a = run_async_local_sgd(&cfg, &vec![sync; 3], DelayModel::zero(), &Placement::uniform(3), &q).unwrap();
        assert_eq!(a.measured_delay, 0);
        let (si, ai) = (s.iterates.unwrap(), a.trace.iterates.unwrap());
        for (x, y) in si.iter().flatten().flatten().zip(ai.iter().flatten().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
        for (x, y) in s.final_mean.iter().zip(&a.aggregate) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn staggered_schedules_with_lag() {
        let (q, _, c) = make_quadratic(3, 1.0, 2.0, 10, 1.0, 8).unwrap();
        let syncs = vec![
            staggered_schedule(40, 4, 0).unwrap(),
            staggered_schedule(40, 4, 2).unwrap(),
        ];
        let step = StepSchedule::theorem_decay(1.0, 16.0 * c.kappa + 1.0).unwrap();
        let cfg = RunConfig::new(2, SyncSchedule::regular(40, 4).unwrap(), step, 1);
        let run = run_async_local_sgd(&cfg, &syncs, DelayModel::fixed(2, 2), &Placement::uniform(2), &q).unwrap();
        assert_eq!(measured_delay(&run.log).unwrap(), run.measured_delay);
        assert!(run.measured_delay <= 2);
        assert!(run.log.is_monotone());
        for (x, y) in run.trace.final_mean.iter().zip(&run.aggregate) {
            assert!((x - y).abs() <= 1e-10);
        }
        let err = run_async_local_sgd(&cfg, &syncs, DelayModel::fixed(3, 2), &Placement::uniform(2), &q).unwrap_err();
        assert!(matches!(err, Error::DelayViolation { declared: 2, .. }));
    }
}
