//! Synchronization index sets and stepsize schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest distance between consecutive elements of a sorted set.
pub fn gap(indices: &[usize]) -> Result<usize> {
    if indices.len() < 2 {
        return Err(Error::invalid("gap needs at least two elements"));
    }
    let mut worst = 0;
    for w in indices.windows(2) {
        if w[1] < w[0] {
            return Err(Error::invalid("gap needs indices sorted ascending"));
        }
        worst = worst.max(w[1] - w[0]);
    }
    Ok(worst)
}

/// Steps `t ∈ [1, T]` after which worker iterates are averaged. Always contains `T`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyncSchedule {
    horizon: usize,
    indices: Vec<usize>,
    gap_bound: usize,
}

impl SyncSchedule {
    /// Validates `indices` against horizon `T` and gap bound `H`. The gap is measured on
    /// `{0} ∪ indices` because all workers start from the same point.
    pub fn new(horizon: usize, indices: Vec<usize>, gap_bound: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::invalid("horizon T must be >= 1"));
        }
        if indices.last() != Some(&horizon) {
            return Err(Error::invalid("synchronization set must contain T"));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) || indices[0] == 0 {
            return Err(Error::invalid(
                "synchronization indices must be strictly increasing within [1, T]",
            ));
        }
        let actual = Self::gap_with_origin(&indices);
        if actual > gap_bound {
            return Err(Error::invalid(format!(
                "gap {actual} of synchronization set exceeds H = {gap_bound}"
            )));
        }
        Ok(SyncSchedule {
            horizon,
            indices,
            gap_bound,
        })
    }

    /// `{H, 2H, …} ∪ {T}`.
    pub fn regular(horizon: usize, h: usize) -> Result<Self> {
        if h < 1 || h > horizon {
            return Err(Error::invalid(format!("need 1 <= H <= T, got H={h}, T={horizon}")));
        }
        let mut indices: Vec<usize> = (1..=horizon / h).map(|m| m * h).collect();
        if indices.last() != Some(&horizon) {
            indices.push(horizon);
        }
        SyncSchedule::new(horizon, indices, h)
    }

    /// Averaging after every step (mini-batch SGD).
    pub fn every_step(horizon: usize) -> Result<Self> {
        Self::regular(horizon, 1)
    }

    /// Averaging only at the end.
    pub fn one_shot(horizon: usize) -> Result<Self> {
        Self::regular(horizon, horizon)
    }

    fn gap_with_origin(indices: &[usize]) -> usize {
        let mut prev = 0;
        let mut worst = 0;
        for &i in indices {
            worst = worst.max(i - prev);
            prev = i;
        }
        worst
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Declared bound `H`.
    pub fn gap_bound(&self) -> usize {
        self.gap_bound
    }

    /// `gap({0} ∪ I_T)`.
    pub fn realized_gap(&self) -> usize {
        Self::gap_with_origin(&self.indices)
    }

    pub fn contains(&self, t: usize) -> bool {
        self.indices.binary_search(&t).is_ok()
    }

    /// Number of synchronization indices `<= t`.
    pub fn count_up_to(&self, t: usize) -> usize {
        self.indices.partition_point(|&i| i <= t)
    }

    /// Consecutive `[start, end)` blocks of local steps delimited by `{0} ∪ I_T`.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut prev = 0;
        self.indices
            .iter()
            .map(|&i| {
                let b = (prev, i);
                prev = i;
                b
            })
            .collect()
    }
}

/// Stepsize rule `η_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `4 / (μ (a + t))`
    TheoremDecay { mu: f64, a: f64 },
    /// `η`
    Constant { eta: f64 },
    /// `min(cap, c·n / (t + 1))`
    ExperimentDecay { cap: f64, c: f64, n: usize },
}

/// Cap of the decaying experiment family and multiplier of the constant one.
pub const EXPERIMENT_STEP_SCALE: f64 = 32.0;

impl StepSchedule {
    pub fn theorem_decay(mu: f64, a: f64) -> Result<Self> {
        if !(mu > 0.0) || !(a > 0.0) {
            return Err(Error::invalid(format!(
                "theorem decay needs mu > 0 and a > 0, got mu={mu}, a={a}"
            )));
        }
        Ok(StepSchedule::TheoremDecay { mu, a })
    }

    pub fn constant(eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("constant stepsize must be positive, got {eta}")));
        }
        Ok(StepSchedule::Constant { eta })
    }

    /// `32c`.
    pub fn experiment_constant(c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid(format!("c must be positive, got {c}")));
        }
        Self::constant(EXPERIMENT_STEP_SCALE * c)
    }

    /// `min(32, c·n/(t+1))`.
    pub fn experiment_decay(c: f64, n: usize) -> Result<Self> {
        if !(c > 0.0) || n == 0 {
            return Err(Error::invalid(format!(
                "experiment decay needs c > 0 and n >= 1, got c={c}, n={n}"
            )));
        }
        Ok(StepSchedule::ExperimentDecay {
            cap: EXPERIMENT_STEP_SCALE,
            c,
            n,
        })
    }

    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::TheoremDecay { mu, a } => 4.0 / (mu * (a + t as f64)),
            StepSchedule::Constant { eta } => eta,
            StepSchedule::ExperimentDecay { cap, c, n } => cap.min(c * n as f64 / (t as f64 + 1.0)),
        }
    }

    /// Shift `a` of the theorem schedule.
    pub fn shift(&self) -> Option<f64> {
        match *self {
            StepSchedule::TheoremDecay { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Requires `a > max{16κ, H}` for theorem decay; other kinds pass.
    pub fn validate_sync(&self, kappa: f64, h: usize) -> Result<()> {
        self.validate_shift(kappa, h, "H")
    }

    /// Requires `a > max{16κ, H + τ}` for theorem decay; other kinds pass.
    pub fn validate_async(&self, kappa: f64, h: usize, tau: usize) -> Result<()> {
        self.validate_shift(kappa, h + tau, "H + tau")
    }

    fn validate_shift(&self, kappa: f64, window: usize, what: &str) -> Result<()> {
        if let StepSchedule::TheoremDecay { a, .. } = *self {
            if !(a > 16.0 * kappa) {
                return Err(Error::Precondition(format!(
                    "shift a = {a} must exceed 16 kappa = {}",
                    16.0 * kappa
                )));
            }
            if !(a > window as f64) {
                return Err(Error::Precondition(format!(
                    "shift a = {a} must exceed {what} = {window}"
                )));
            }
        }
        Ok(())
    }
}

/// `η_t` under `schedule`.
pub fn stepsize(t: usize, schedule: &StepSchedule) -> f64 {
    schedule.at(t)
}

/// Smallest valid integer-plus-one shift for the theorem schedule: `max{16κ, window} + 1`.
pub fn minimal_shift(kappa: f64, window: usize) -> f64 {
    (16.0 * kappa).max(window as f64) + 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gap_examples() {
        let t = 17;
        let full: Vec<usize> = (0..=t).collect();
        assert_eq!(gap(&full).unwrap(), 1);
        assert_eq!(gap(&[0, 3, 5, 9]).unwrap(), 4);
        assert_eq!(gap(&[0, t]).unwrap(), t);
        assert!(gap(&[4]).is_err());
        assert!(gap(&[3, 1]).is_err());
    }

    #[test]
    fn regular_schedule_examples() {
        assert_eq!(SyncSchedule::regular(10, 3).unwrap().indices(), &[3, 6, 9, 10]);
        assert_eq!(
            SyncSchedule::regular(10, 1).unwrap().indices(),
            &(1..=10).collect::<Vec<_>>()[..]
        );
        assert_eq!(SyncSchedule::regular(10, 10).unwrap().indices(), &[10]);
        assert!(SyncSchedule::regular(10, 0).is_err());
        assert!(SyncSchedule::regular(10, 11).is_err());
    }

    #[test]
    fn explicit_schedule_validation() {
        assert!(SyncSchedule::new(10, vec![3, 6, 9], 3).is_err());
        assert!(SyncSchedule::new(10, vec![0, 5, 10], 5).is_err());
        assert!(SyncSchedule::new(10, vec![5, 10], 4).is_err());
        let s = SyncSchedule::new(10, vec![2, 5, 10], 5).unwrap();
        assert_eq!(s.realized_gap(), 5);
        assert!(s.contains(5) && !s.contains(4));
        assert_eq!(s.count_up_to(6), 2);
        assert_eq!(s.blocks(), vec![(0, 2), (2, 5), (5, 10)]);
    }

    #[test]
    fn regular_gap_exhaustive_small_range() {
        for t in 1..=300usize {
            for h in 1..=t {
                let s = SyncSchedule::regular(t, h).unwrap();
                assert!(s.realized_gap() <= h);
                assert_eq!(*s.indices().last().unwrap(), t);
            }
        }
    }

    #[test]
    fn stepsize_examples() {
        let th = StepSchedule::theorem_decay(1.0, 32.0).unwrap();
        assert_eq!(stepsize(0, &th), 0.125);
        let ex = StepSchedule::experiment_decay(1.0, 100).unwrap();
        assert_eq!(stepsize(199, &ex), 0.5);
        assert_eq!(stepsize(0, &ex), 32.0);
        let c = StepSchedule::experiment_constant(0.25).unwrap();
        assert_eq!(stepsize(5, &c), 8.0);
        assert!(StepSchedule::theorem_decay(0.0, 1.0).is_err());
        assert!(StepSchedule::theorem_decay(1.0, -1.0).is_err());
        assert!(StepSchedule::experiment_decay(0.0, 3).is_err());
        assert!(StepSchedule::experiment_constant(-1.0).is_err());
    }

    #[test]
    fn shift_preconditions() {
        let s = StepSchedule::theorem_decay(1.0, 65.0).unwrap();
        assert!(s.validate_sync(4.0, 8).is_ok());
        assert!(s.validate_sync(4.0, 65).is_err());
        assert!(StepSchedule::theorem_decay(1.0, 64.0)
            .unwrap()
            .validate_sync(4.0, 1)
            .is_err());
        assert!(s.validate_async(4.0, 60, 4).is_ok());
        assert!(s.validate_async(4.0, 60, 5).is_err());
        assert_eq!(minimal_shift(4.0, 8), 65.0);
    }

    #[test]
    fn theorem_decay_first_step_bounded_by_quarter_inverse_smoothness() {
        for &(mu, l) in &[(1.0, 4.0), (0.01, 3.0), (2.0, 2.0)] {
            let kappa = l / mu;
            let s = StepSchedule::theorem_decay(mu, 16.0 * kappa).unwrap();
            assert!(s.at(0) <= 1.0 / (4.0 * l) * (1.0 + 1e-15));
        }
    }

    proptest! {
        #[test]
        fn theorem_decay_halving_window(mu in 0.01f64..10.0, h in 1usize..200, extra in 0.0f64..100.0) {
            let a = h as f64 + extra;
            let s = StepSchedule::theorem_decay(mu, a).unwrap();
            for t in 0..=1000usize {
                prop_assert!(s.at(t) <= 2.0 * s.at(t + h) * (1.0 + 1e-12));
                prop_assert!(s.at(t + 1) <= s.at(t));
            }
        }
    }
}
