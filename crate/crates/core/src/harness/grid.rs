//! Stepsize grid search over `c = 2^i` for the two experiment stepsize families.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedules::StepSchedule;

/// Stepsize families; the declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepFamily {
    /// `min(32, c·n/(t+1))`
    Decay,
    /// `32c`
    Constant,
}

impl StepFamily {
    pub fn name(&self) -> &'static str {
        match self {
            StepFamily::Decay => "decay",
            StepFamily::Constant => "constant",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "decay" => Ok(StepFamily::Decay),
            "constant" => Ok(StepFamily::Constant),
            other => Err(Error::invalid(format!("unknown stepsize family '{other}'"))),
        }
    }

    pub fn schedule(&self, c: f64, n: usize) -> Result<StepSchedule> {
        match self {
            StepFamily::Decay => StepSchedule::experiment_decay(c, n),
            StepFamily::Constant => StepSchedule::experiment_constant(c),
        }
    }
}

/// Inclusive exponent range and starting exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridWindow {
    pub lo: i32,
    pub hi: i32,
    pub start: i32,
}

impl GridWindow {
    pub fn new(lo: i32, hi: i32, start: i32) -> Result<Self> {
        if lo > hi || !(lo..=hi).contains(&start) {
            return Err(Error::invalid(format!(
                "invalid grid window [{lo}, {hi}] with start {start}"
            )));
        }
        Ok(GridWindow { lo, hi, start })
    }

    fn contains(&self, i: i32) -> bool {
        (self.lo..=self.hi).contains(&i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridChoice {
    pub family: StepFamily,
    pub exponent: i32,
    pub c: f64,
    pub iterations: usize,
}

/// `2^i`.
pub fn grid_value(i: i32) -> f64 {
    2f64.powi(i)
}

/// Memoized local descent on `(T*(i), i)`, unreachable counting as infinite. `i` is
/// accepted once `i−2, i−1, i+1, i+2` (inside the window) are all worse. When the start and
/// its neighbours never reach the target, exponents are scanned outward from the start.
pub fn search_family<F>(window: GridWindow, mut eval: F) -> Result<Option<(i32, usize)>>
where
    F: FnMut(i32) -> Result<Option<usize>>,
{
    let mut memo: BTreeMap<i32, Option<usize>> = BTreeMap::new();
    let mut key = |i: i32, memo: &mut BTreeMap<i32, Option<usize>>| -> Result<(usize, i32)> {
        if let Some(v) = memo.get(&i) {
            return Ok((v.unwrap_or(usize::MAX), i));
        }
        let v = eval(i)?;
        memo.insert(i, v);
        Ok((v.unwrap_or(usize::MAX), i))
    };

    let mut current = window.start;
    let mut any = false;
    for i in (current - 2..=current + 2).filter(|&i| window.contains(i)) {
        any |= key(i, &mut memo)?.0 != usize::MAX;
    }
    if !any {
        let mut found = None;
        let mut dist = 3;
        while found.is_none() && (window.contains(current - dist) || window.contains(current + dist)) {
            for i in [current - dist, current + dist] {
                if window.contains(i) && key(i, &mut memo)?.0 != usize::MAX {
                    found = Some(i);
                    break;
                }
            }
            dist += 1;
        }
        match found {
            Some(i) => current = i,
            None => return Ok(None),
        }
    }
    loop {
        let mut best = key(current, &mut memo)?;
        for i in [current - 2, current - 1, current + 1, current + 2] {
            if window.contains(i) {
                best = best.min(key(i, &mut memo)?);
            }
        }
        if best.1 == current {
            return Ok((best.0 != usize::MAX).then_some((current, best.0)));
        }
        current = best.1;
    }
}

/// Best choice over `families`: fewest iterations, then smaller `c`, then the decaying family.
pub fn grid_search<F>(families: &[StepFamily], window: GridWindow, mut eval: F) -> Result<Option<GridChoice>>
where
    F: FnMut(StepFamily, i32) -> Result<Option<usize>>,
{
    let mut best: Option<GridChoice> = None;
    let mut ordered = families.to_vec();
    ordered.sort();
    ordered.dedup();
    for family in ordered {
        if let Some((exponent, iterations)) = search_family(window, |i| eval(family, i))? {
            let choice = GridChoice {
                family,
                exponent,
                c: grid_value(exponent),
                iterations,
            };
            let better = best.is_none_or(|b| {
                (choice.iterations, choice.exponent, choice.family) < (b.iterations, b.exponent, b.family)
            });
            if better {
                best = Some(choice);
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_response_finds_argmin() {
        let w = GridWindow::new(-20, 20, 0).unwrap();
        for target in [-17, -3, 0, 5, 19] {
            let f = |i: i32| Ok(Some(((i - target) * (i - target)) as usize + 10));
            assert_eq!(search_family(w, f).unwrap(), Some((target, 10)));
        }
    }

    #[test]
    fn flat_response_walks_to_smallest_c() {
        let w = GridWindow::new(-20, 20, 0).unwrap();
        let mut calls = 0;
        let r = search_family(w, |_| {
            calls += 1;
            Ok(Some(0))
        })
        .unwrap();
        assert_eq!(r, Some((-20, 0)));
        assert!(calls <= 41);
        let both = grid_search(&[StepFamily::Constant, StepFamily::Decay], w, |_, _| Ok(Some(0)))
            .unwrap()
            .unwrap();
        assert_eq!((both.family, both.exponent), (StepFamily::Decay, -20));
    }

    #[test]
    fn unreachable_start_scans_outward() {
        let w = GridWindow::new(-20, 20, 0).unwrap();
        let f = |i: i32| Ok(if i <= -9 { Some((20 + i) as usize) } else { None });
        assert_eq!(search_family(w, f).unwrap(), Some((-20, 0)));
        let none = search_family(w, |_| Ok(None)).unwrap();
        assert_eq!(none, None);
    }

    #[test]
    fn families_compared_by_iterations() {
        let w = GridWindow::new(-5, 5, 0).unwrap();
        let r = grid_search(&[StepFamily::Decay, StepFamily::Constant], w, |f, i| {
            Ok(Some(match f {
                StepFamily::Decay => 100 + (i - 2).unsigned_abs() as usize,
                StepFamily::Constant => 50 + (i + 1).unsigned_abs() as usize,
            }))
        })
        .unwrap()
        .unwrap();
        assert_eq!((r.family, r.exponent, r.iterations), (StepFamily::Constant, -1, 50));
    }
}
