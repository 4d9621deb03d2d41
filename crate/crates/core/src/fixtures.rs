//! Small problems bundled with the crate for tests, examples and lemma checks.

use std::sync::Arc;

use crate::data::{parse_libsvm_str, Dataset};
use crate::objectives::{make_quadratic, LogisticL2, ProblemConstants, Quadratic, ReferenceSolution};

const LOGISTIC50: &str = include_str!("../data/logistic50.libsvm");

/// Quadratic with `d = 10`, `μ = 1`, `L = 4`, 64 components and `σ² = 1`.
pub fn standard_quadratic() -> (Quadratic, ReferenceSolution, ProblemConstants) {
    make_quadratic(10, 1.0, 4.0, 64, 1.0, 20190101).expect("fixed parameters are valid")
}

/// The same quadratic without gradient noise.
pub fn noiseless_quadratic() -> (Quadratic, ReferenceSolution, ProblemConstants) {
    make_quadratic(10, 1.0, 4.0, 64, 0.0, 20190101).expect("fixed parameters are valid")
}

/// 50 labelled points in 8 dimensions with rows of norm at most 1.
pub fn logistic50_dataset() -> Dataset {
    parse_libsvm_str(LOGISTIC50, None).expect("bundled fixture parses")
}

/// Regularized logistic regression on [`logistic50_dataset`] with `λ = 1/n`.
pub fn logistic50() -> LogisticL2 {
    LogisticL2::with_default_lambda(Arc::new(logistic50_dataset()))
}
