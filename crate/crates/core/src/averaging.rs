//! Running weighted averages of iterates and the quadratic-weight output average.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AveragingScheme {
    /// `y_t = x_t`
    Last,
    /// `w_t = 1`
    Uniform,
    /// `w_t = t + 1`
    Linear,
    /// `w_t = (shift + t)²`; shift 1 is the classic `(t + 1)²` table weight.
    Quadratic { shift: f64 },
}

impl AveragingScheme {
    /// The four averages tracked by experiments: last, uniform, linear, quadratic.
    pub const TRACKED: [AveragingScheme; 4] = [
        AveragingScheme::Last,
        AveragingScheme::Uniform,
        AveragingScheme::Linear,
        AveragingScheme::Quadratic { shift: 1.0 },
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AveragingScheme::Last => "last",
            AveragingScheme::Uniform => "uniform",
            AveragingScheme::Linear => "linear",
            AveragingScheme::Quadratic { .. } => "quadratic",
        }
    }

    /// Weight of the iterate at step `t`; `None` for the last-iterate scheme.
    pub fn weight(&self, t: usize) -> Option<f64> {
        let t = t as f64;
        match *self {
            AveragingScheme::Last => None,
            AveragingScheme::Uniform => Some(1.0),
            AveragingScheme::Linear => Some(t + 1.0),
            AveragingScheme::Quadratic { shift } => Some((shift + t) * (shift + t)),
        }
    }
}

/// `(Σw, Σw·x)` accumulator for arbitrary nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAccumulator {
    weight_sum: f64,
    weighted: Vec<f64>,
}

impl WeightedAccumulator {
    pub fn new(dim: usize) -> Self {
        WeightedAccumulator {
            weight_sum: 0.0,
            weighted: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, weight: f64, x: &[f64]) {
        self.weight_sum += weight;
        for (a, xi) in self.weighted.iter_mut().zip(x) {
            *a += weight * xi;
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn mean(&self) -> Vec<f64> {
        self.weighted.iter().map(|a| a / self.weight_sum).collect()
    }

    pub fn mean_into(&self, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.weighted) {
            *o = a / self.weight_sum;
        }
    }
}

/// Running average `y_t` updated one iterate at a time, in step order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningAverage {
    scheme: AveragingScheme,
    y: Vec<f64>,
    next_t: usize,
    acc: Option<WeightedAccumulator>,
}

impl RunningAverage {
    pub fn new(scheme: AveragingScheme, dim: usize) -> Self {
        let acc = match scheme {
            AveragingScheme::Quadratic { shift } if shift != 1.0 => Some(WeightedAccumulator::new(dim)),
            _ => None,
        };
        RunningAverage {
            scheme,
            y: vec![0.0; dim],
            next_t: 0,
            acc,
        }
    }

    pub fn scheme(&self) -> AveragingScheme {
        self.scheme
    }

    /// Number of iterates absorbed so far.
    pub fn count(&self) -> usize {
        self.next_t
    }

    pub fn value(&self) -> &[f64] {
        &self.y
    }

    /// Absorbs `x_t`; `t` must equal the number of earlier updates.
    pub fn update(&mut self, x: &[f64], t: usize) -> Result<()> {
        if t != self.next_t {
            return Err(Error::invalid(format!(
                "running average expected step {}, got {t}",
                self.next_t
            )));
        }
        if x.len() != self.y.len() {
            return Err(Error::DimensionMismatch {
                expected: self.y.len(),
                got: x.len(),
            });
        }
        self.absorb(x);
        Ok(())
    }

    /// Same as [`update`](Self::update) for callers that own the step counter.
    pub(crate) fn absorb(&mut self, x: &[f64]) {
        let t = self.next_t as f64;
        if let Some(acc) = self.acc.as_mut() {
            let w = self.scheme.weight(self.next_t).unwrap_or(1.0);
            acc.add(w, x);
            acc.mean_into(&mut self.y);
            self.next_t += 1;
            return;
        }
        // (coefficient on x_t, coefficient on y_{t-1})
        let (cx, cy) = match self.scheme {
            AveragingScheme::Last => (1.0, 0.0),
            AveragingScheme::Uniform => (1.0 / (t + 1.0), t / (t + 1.0)),
            AveragingScheme::Linear => (2.0 / (2.0 + t), t / (t + 2.0)),
            AveragingScheme::Quadratic { .. } => (
                6.0 * (t + 1.0) / ((t + 2.0) * (2.0 * t + 3.0)),
                t * (1.0 + 2.0 * t) / (6.0 + 7.0 * t + 2.0 * t * t),
            ),
        };
        if self.next_t == 0 {
            self.y.copy_from_slice(x);
        } else {
            for (yi, xi) in self.y.iter_mut().zip(x) {
                *yi = cx * xi + cy * *yi;
            }
        }
        self.next_t += 1;
    }
}

/// Applies one step of `scheme`'s recursion to `state`; returns the updated state.
pub fn update_running_average(mut state: RunningAverage, x_t: &[f64], t: usize) -> Result<RunningAverage> {
    state.update(x_t, t)?;
    Ok(state)
}

/// Closed form `S_T = Σ_{t<T} (a+t)² = T/6 (2T² + 6aT − 3T + 6a² − 6a + 1)`.
pub fn sum_of_weights(a: f64, horizon: usize) -> Result<f64> {
    if horizon < 1 || !(a >= 1.0) {
        return Err(Error::invalid(format!(
            "S_T needs T >= 1 and a >= 1, got T={horizon}, a={a}"
        )));
    }
    let t = horizon as f64;
    Ok(t / 6.0 * (2.0 * t * t + 6.0 * a * t - 3.0 * t + 6.0 * a * a - 6.0 * a + 1.0))
}

/// `x̂_T = (1/(K S_T)) Σ_k Σ_{t<T} (a+t)² x_t^k` from per-worker traces `traces[k][t]`.
pub fn theorem_average(traces: &[Vec<Vec<f64>>], a: f64) -> Result<Vec<f64>> {
    let k = traces.len();
    if k == 0 {
        return Err(Error::Ragged("no worker traces".into()));
    }
    let horizon = traces[0].len();
    if horizon == 0 {
        return Err(Error::Ragged("empty worker trace".into()));
    }
    let dim = traces[0][0].len();
    for tr in traces {
        if tr.len() != horizon || tr.iter().any(|x| x.len() != dim) {
            return Err(Error::Ragged("worker traces differ in length or dimension".into()));
        }
    }
    let s_t = sum_of_weights(a, horizon)?;
    let mut out = vec![0.0; dim];
    for tr in traces {
        for (t, x) in tr.iter().enumerate() {
            let w = (a + t as f64) * (a + t as f64);
            for (o, xi) in out.iter_mut().zip(x) {
                *o += w * xi;
            }
        }
    }
    let denom = k as f64 * s_t;
    out.iter_mut().for_each(|o| *o /= denom);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    // direct Σ w_i x_i / Σ w_i, independent of the recursions
    fn direct(scheme: AveragingScheme, xs: &[Vec<f64>]) -> Vec<f64> {
        if scheme == AveragingScheme::Last {
            return xs.last().unwrap().clone();
        }
        let d = xs[0].len();
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let w = scheme.weight(i).unwrap();
            den += w;
            for j in 0..d {
                num[j] += w * x[j];
            }
        }
        num.iter().map(|v| v / den).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300);
        diff / scale
    }

    #[test]
    fn first_update_returns_the_point() {
        for scheme in AveragingScheme::TRACKED
            .into_iter()
            .chain([AveragingScheme::Quadratic { shift: 17.0 }])
        {
            let st = update_running_average(RunningAverage::new(scheme, 2), &[3.0, -1.0], 0).unwrap();
            assert_eq!(st.value(), &[3.0, -1.0]);
        }
    }

    #[test]
    fn two_point_examples() {
        let x0 = [1.0, 2.0];
        let x1 = [6.0, -3.0];
        let mut q = RunningAverage::new(AveragingScheme::Quadratic { shift: 1.0 }, 2);
        q.update(&x0, 0).unwrap();
        q.update(&x1, 1).unwrap();
        // (1·x0 + 4·x1) / 5
        let expect = [(1.0 + 4.0 * 6.0) / 5.0, (2.0 - 12.0) / 5.0];
        assert!(rel_err(q.value(), &expect) < 1e-15);

        let mut u = RunningAverage::new(AveragingScheme::Uniform, 2);
        u.update(&x0, 0).unwrap();
        u.update(&x1, 1).unwrap();
        assert_eq!(u.value(), &[3.5, -0.5]);
    }

    #[test]
    fn out_of_order_update_rejected() {
        let mut r = RunningAverage::new(AveragingScheme::Linear, 1);
        r.update(&[1.0], 0).unwrap();
        assert!(r.update(&[1.0], 2).is_err());
        assert!(r.update(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn table_recursion_agrees_with_accumulator_for_shift_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut table = RunningAverage::new(AveragingScheme::Quadratic { shift: 1.0 }, 3);
        let mut acc = WeightedAccumulator::new(3);
        for t in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            table.update(&x, t).unwrap();
            acc.add(((t + 1) * (t + 1)) as f64, &x);
        }
        assert!(rel_err(table.value(), &acc.mean()) < 1e-12);
    }

    #[test]
    fn sum_of_weights_examples() {
        assert_eq!(sum_of_weights(1.0, 1).unwrap(), 1.0);
        assert!((sum_of_weights(1.0, 3).unwrap() - 14.0).abs() < 1e-12);
        assert!(sum_of_weights(0.5, 3).is_err());
        assert!(sum_of_weights(2.0, 0).is_err());
        for &a in &[1.0, 2.5, 17.0, 65.0, 1000.0] {
            for &t in &[1usize, 2, 7, 100, 1000, 12345] {
                let direct: f64 = (0..t).map(|i| (a + i as f64).powi(2)).sum();
                let closed = sum_of_weights(a, t).unwrap();
                assert!((closed - direct).abs() <= 1e-12 * direct, "a={a} T={t}");
                assert!(closed >= (t as f64).powi(3) / 3.0);
            }
        }
    }

    #[test]
    fn theorem_average_examples() {
        let single = vec![vec![vec![2.0, -1.0]]];
        assert_eq!(theorem_average(&single, 5.0).unwrap(), vec![2.0, -1.0]);

        let v = vec![0.3, 7.0];
        let same = vec![vec![v.clone(); 6]; 3];
        assert!(rel_err(&theorem_average(&same, 4.0).unwrap(), &v) < 1e-15);

        // K=2, T=2, a=1: weights {1, 4}, S_T = 5
        let traces = vec![vec![vec![1.0], vec![3.0]], vec![vec![5.0], vec![-1.0]]];
        let expect = (1.0 * 1.0 + 4.0 * 3.0 + 1.0 * 5.0 + -4.0) / (2.0 * 5.0);
        assert!((theorem_average(&traces, 1.0).unwrap()[0] - expect).abs() < 1e-15);

        let ragged = vec![vec![vec![1.0], vec![3.0]], vec![vec![5.0]]];
        assert!(matches!(theorem_average(&ragged, 1.0), Err(Error::Ragged(_))));
    }

    #[test]
    fn theorem_average_equals_running_quadratic_of_worker_means() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let (k, t_len, d, a) = (3, 40, 4, 9.0);
        let traces: Vec<Vec<Vec<f64>>> = (0..k)
            .map(|_| {
                (0..t_len)
                    .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect();
        let mut run = RunningAverage::new(AveragingScheme::Quadratic { shift: a }, d);
        for t in 0..t_len {
            let mean: Vec<f64> = (0..d)
                .map(|j| traces.iter().map(|tr| tr[t][j]).sum::<f64>() / k as f64)
                .collect();
            run.update(&mean, t).unwrap();
        }
        assert!(rel_err(&theorem_average(&traces, a).unwrap(), run.value()) < 1e-12);
    }

    proptest! {
        #[test]
        fn recursions_match_direct_sums_and_stay_in_hull(
            seed in any::<u64>(),
            len in 1usize..300,
            shift in 1.0f64..50.0,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<Vec<f64>> = (0..len)
                .map(|_| (0..3).map(|_| rng.random_range(-10.0..10.0)).collect())
                .collect();
            let schemes = AveragingScheme::TRACKED
                .into_iter()
                .chain([AveragingScheme::Quadratic { shift }]);
            for scheme in schemes {
                let mut r = RunningAverage::new(scheme, 3);
                for (t, x) in xs.iter().enumerate() {
                    r.update(x, t).unwrap();
                }
                let oracle = direct(scheme, &xs);
                prop_assert!(rel_err(r.value(), &oracle) <= 1e-9);
                for j in 0..3 {
                    let lo = xs.iter().map(|x| x[j]).fold(f64::INFINITY, f64::min);
                    let hi = xs.iter().map(|x| x[j]).fold(f64::NEG_INFINITY, f64::max);
                    let tol = 1e-12 * (hi.abs() + lo.abs() + 1.0);
                    prop_assert!(r.value()[j] >= lo - tol && r.value()[j] <= hi + tol);
                }
            }
        }
    }
}
