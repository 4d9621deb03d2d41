//! Finite-sum objectives `f(x) = (1/n) Σ f_i(x)` and the constants the bounds consume.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Dataset, SparseVector};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    LogisticL2,
    SyntheticQuadratic,
}

/// Analytic curvature bounds: `μ`-strongly convex and `L`-smooth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    pub mu: f64,
    pub l: f64,
}

/// A finite sum of `n` smooth components over `R^d`.
///
/// Methods take slices of length `dim()`; callers validate dimensions once up front
/// (see [`check_dim`]) so the hot paths stay unchecked.
pub trait Objective: Send + Sync {
    fn kind(&self) -> ObjectiveKind;
    fn dim(&self) -> usize;
    fn num_components(&self) -> usize;

    fn component_value(&self, x: &[f64], i: usize) -> f64;

    /// `out += scale · ∇f_i(x)`.
    fn add_component_gradient(&self, x: &[f64], i: usize, scale: f64, out: &mut [f64]);

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.num_components();
        let sum: f64 = (0..n).map(|i| self.component_value(x, i)).sum();
        sum / n as f64
    }

    /// Exact full gradient, the arithmetic mean of the component gradients.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.num_components();
        let mut g = vec![0.0; self.dim()];
        let scale = 1.0 / n as f64;
        for i in 0..n {
            self.add_component_gradient(x, i, scale, &mut g);
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    fn curvature(&self) -> Curvature;
}

pub fn check_dim(objective: &dyn Objective, x: &[f64]) -> Result<()> {
    if x.len() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// `f(x)` with dimension and finiteness checks.
pub fn checked_value(objective: &dyn Objective, x: &[f64]) -> Result<f64> {
    check_dim(objective, x)?;
    let v = objective.value(x);
    if !v.is_finite() {
        return Err(Error::NonFinite("objective value"));
    }
    Ok(v)
}

/// `∇f_i(x)` with dimension, index and finiteness checks.
pub fn checked_component_gradient(objective: &dyn Objective, x: &[f64], i: usize) -> Result<Vec<f64>> {
    check_dim(objective, x)?;
    if i >= objective.num_components() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: objective.num_components(),
        });
    }
    let mut g = vec![0.0; x.len()];
    objective.add_component_gradient(x, i, 1.0, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("component gradient"));
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Logistic regression with L2 regularization.

/// `log(1 + exp(-m))` without overflow for large `|m|`.
#[inline]
pub fn log1p_exp_neg(margin: f64) -> f64 {
    if margin > 0.0 {
        (-margin).exp().ln_1p()
    } else {
        -margin + margin.exp().ln_1p()
    }
}

/// `1 / (1 + exp(m))`, evaluated on the side that cannot overflow.
#[inline]
fn sigmoid_neg(margin: f64) -> f64 {
    if margin >= 0.0 {
        let e = (-margin).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + margin.exp())
    }
}

/// `f_i(x) = log(1 + exp(-b_i a_iᵀx)) + (λ/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct LogisticL2 {
    dataset: Arc<Dataset>,
    lambda: f64,
}

impl LogisticL2 {
    pub fn new(dataset: Arc<Dataset>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        Ok(LogisticL2 { dataset, lambda })
    }

    /// Uses the regularization `λ = 1/n`.
    pub fn with_default_lambda(dataset: Arc<Dataset>) -> Self {
        let lambda = dataset.default_lambda();
        LogisticL2 { dataset, lambda }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    fn margin(&self, x: &[f64], i: usize) -> (f64, &SparseVector, f64) {
        let ex = self.dataset.example(i);
        (ex.label * ex.features.dot_unchecked(x), &ex.features, ex.label)
    }
}

impl Objective for LogisticL2 {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::LogisticL2
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn num_components(&self) -> usize {
        self.dataset.len()
    }

    fn component_value(&self, x: &[f64], i: usize) -> f64 {
        let (m, _, _) = self.margin(x, i);
        log1p_exp_neg(m) + 0.5 * self.lambda * norm_sq(x)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = self.dataset.len();
        let loss: f64 = (0..n).map(|i| log1p_exp_neg(self.margin(x, i).0)).sum();
        loss / n as f64 + 0.5 * self.lambda * norm_sq(x)
    }

    fn add_component_gradient(&self, x: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let (m, features, label) = self.margin(x, i);
        let coeff = -label * sigmoid_neg(m);
        features.axpy_into(scale * coeff, out);
        if self.lambda != 0.0 {
            let s = scale * self.lambda;
            for (o, xi) in out.iter_mut().zip(x) {
                *o += s * xi;
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dataset.len();
        let mut g = vec![0.0; x.len()];
        for i in 0..n {
            let (m, features, label) = self.margin(x, i);
            features.axpy_into(-label * sigmoid_neg(m), &mut g);
        }
        let inv_n = 1.0 / n as f64;
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = *gi * inv_n + self.lambda * xi;
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let n = self.dataset.len();
        let mut h = DMatrix::<f64>::zeros(d, d);
        for i in 0..n {
            let (m, features, _) = self.margin(x, i);
            let s = sigmoid_neg(m);
            let w = s * (1.0 - s);
            if w == 0.0 {
                continue;
            }
            for (p, vp) in features.iter() {
                for (q, vq) in features.iter() {
                    h[(p, q)] += w * vp * vq;
                }
            }
        }
        h /= n as f64;
        for j in 0..d {
            h[(j, j)] += self.lambda;
        }
        h
    }

    fn curvature(&self) -> Curvature {
        Curvature {
            mu: self.lambda,
            l: self.lambda + self.dataset.max_squared_norm() / 4.0,
        }
    }
}

/// Checked `f(x)` for the logistic objective on `dataset` with regularization `lambda`.
pub fn logistic_value(x: &[f64], dataset: &Dataset, lambda: f64) -> Result<f64> {
    if x.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: x.len(),
        });
    }
    let n = dataset.len();
    let mut loss = 0.0;
    for ex in dataset.examples() {
        loss += log1p_exp_neg(ex.label * ex.features.dot_unchecked(x));
    }
    let v = loss / n as f64 + 0.5 * lambda * norm_sq(x);
    if !v.is_finite() {
        return Err(Error::NonFinite("logistic value"));
    }
    Ok(v)
}

/// Checked `∇f_i(x) = -b_i a_i / (1 + exp(b_i a_iᵀx)) + λx`, `i` zero-based.
pub fn stochastic_gradient(x: &[f64], i: usize, dataset: &Dataset, lambda: f64) -> Result<Vec<f64>> {
    if x.len() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: x.len(),
        });
    }
    if i >= dataset.len() {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: dataset.len(),
        });
    }
    let ex = dataset.example(i);
    let m = ex.label * ex.features.dot_unchecked(x);
    let mut g: Vec<f64> = x.iter().map(|xi| lambda * xi).collect();
    ex.features.axpy_into(-ex.label * sigmoid_neg(m), &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("stochastic gradient"));
    }
    Ok(g)
}

// ---------------------------------------------------------------------------
// Synthetic quadratic with a diagonal Hessian.

/// `f_i(x) = ½ xᵀA x − b_iᵀx` with a shared diagonal `A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    diag: Vec<f64>,
    targets: Vec<Vec<f64>>,
    mean_target: Vec<f64>,
}

impl Quadratic {
    /// Builds from an explicit diagonal and per-component linear terms.
    pub fn new(diag: Vec<f64>, targets: Vec<Vec<f64>>) -> Result<Self> {
        let d = diag.len();
        if d == 0 || targets.is_empty() {
            return Err(Error::invalid("quadratic needs d >= 1 and n >= 1"));
        }
        if diag.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::invalid("diagonal entries must be positive"));
        }
        if targets.iter().any(|b| b.len() != d) {
            return Err(Error::Ragged("quadratic targets".into()));
        }
        let n = targets.len() as f64;
        let mut mean_target = vec![0.0; d];
        for b in &targets {
            for (m, v) in mean_target.iter_mut().zip(b) {
                *m += v;
            }
        }
        for m in &mut mean_target {
            *m /= n;
        }
        Ok(Quadratic {
            diag,
            targets,
            mean_target,
        })
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn mean_target(&self) -> &[f64] {
        &self.mean_target
    }

    /// Exact minimizer `A⁻¹ b̄` and minimum value.
    pub fn reference_solution(&self) -> ReferenceSolution {
        let x_star: Vec<f64> = self.mean_target.iter().zip(&self.diag).map(|(b, a)| b / a).collect();
        let f_star = -0.5 * dot(&self.mean_target, &x_star);
        ReferenceSolution {
            x_star,
            f_star,
            provenance: Provenance::Analytic,
        }
    }

    /// Exact `E_i‖∇f_i(x) − ∇f(x)‖²`, which is independent of `x`.
    pub fn gradient_variance(&self) -> f64 {
        let n = self.targets.len() as f64;
        self.targets
            .iter()
            .map(|b| {
                b.iter()
                    .zip(&self.mean_target)
                    .map(|(bi, mi)| (bi - mi) * (bi - mi))
                    .sum::<f64>()
            })
            .sum::<f64>()
            / n
    }
}

impl Objective for Quadratic {
    fn kind(&self) -> ObjectiveKind {
        ObjectiveKind::SyntheticQuadratic
    }

    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn num_components(&self) -> usize {
        self.targets.len()
    }

    fn component_value(&self, x: &[f64], i: usize) -> f64 {
        let quad: f64 = self.diag.iter().zip(x).map(|(a, xi)| a * xi * xi).sum();
        0.5 * quad - dot(&self.targets[i], x)
    }

    fn value(&self, x: &[f64]) -> f64 {
        let quad: f64 = self.diag.iter().zip(x).map(|(a, xi)| a * xi * xi).sum();
        0.5 * quad - dot(&self.mean_target, x)
    }

    fn add_component_gradient(&self, x: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let b = &self.targets[i];
        for j in 0..out.len() {
            out[j] += scale * (self.diag[j] * x[j] - b[j]);
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.diag
            .iter()
            .zip(x)
            .zip(&self.mean_target)
            .map(|((a, xi), b)| a * xi - b)
            .collect()
    }

    fn hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diag))
    }

    fn curvature(&self) -> Curvature {
        let mu = self.diag.iter().copied().fold(f64::INFINITY, f64::min);
        let l = self.diag.iter().copied().fold(0.0, f64::max);
        Curvature { mu, l }
    }
}

/// Random quadratic whose Hessian spectrum spans `[mu, l]` (endpoints attained) and whose
/// per-component gradient variance is exactly `noise` at every point.
pub fn make_quadratic(
    d: usize,
    mu: f64,
    l: f64,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<(Quadratic, ReferenceSolution, ProblemConstants)> {
    if d == 0 || n == 0 {
        return Err(Error::invalid("quadratic needs d >= 1 and n >= 1"));
    }
    if !(mu > 0.0) || !(l >= mu) || !l.is_finite() {
        return Err(Error::invalid(format!("need 0 < mu <= L, got mu={mu}, L={l}")));
    }
    if d == 1 && mu != l {
        return Err(Error::invalid(
            "d = 1 cannot attain both spectrum endpoints unless mu = L",
        ));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return Err(Error::invalid("noise must be finite and nonnegative"));
    }
    if noise > 0.0 && n < 2 {
        return Err(Error::invalid("positive noise needs at least two components"));
    }

    let diag: Vec<f64> = if d == 1 {
        vec![mu]
    } else {
        (0..d).map(|j| mu + (l - mu) * j as f64 / (d - 1) as f64).collect()
    };
    // endpoints exactly, independent of rounding in the interpolation
    let mut diag = diag;
    diag[0] = mu;
    diag[d - 1] = l;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();

    let mut offsets: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    if noise > 0.0 {
        let mut centre = vec![0.0; d];
        for z in &offsets {
            for (c, v) in centre.iter_mut().zip(z) {
                *c += v / n as f64;
            }
        }
        for z in &mut offsets {
            for (v, c) in z.iter_mut().zip(&centre) {
                *v -= c;
            }
        }
        let spread: f64 = offsets.iter().map(|z| norm_sq(z)).sum::<f64>() / n as f64;
        let scale = (noise / spread).sqrt();
        for z in &mut offsets {
            for v in z.iter_mut() {
                *v *= scale;
            }
        }
    } else {
        for z in &mut offsets {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let targets: Vec<Vec<f64>> = offsets
        .into_iter()
        .map(|z| z.iter().zip(&mean).map(|(zi, m)| m + zi).collect())
        .collect();

    let quad = Quadratic::new(diag, targets)?;
    let reference = quad.reference_solution();
    let sigma2 = quad.gradient_variance();
    let g2_origin = norm_sq(quad.mean_target()) + sigma2;
    let constants = ProblemConstants::new(l, mu, sigma2, g2_origin)?;
    Ok((quad, reference, constants))
}

// ---------------------------------------------------------------------------
// Problem constants and reference solutions.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    /// Smoothness `L`.
    pub l: f64,
    /// Strong convexity `μ`.
    pub mu: f64,
    /// `L/μ`.
    pub kappa: f64,
    /// Variance bound `σ²`.
    pub sigma2: f64,
    /// Second-moment bound `G²`.
    pub g2: f64,
}

impl ProblemConstants {
    pub fn new(l: f64, mu: f64, sigma2: f64, g2: f64) -> Result<Self> {
        if !(mu > 0.0) || !(l >= mu) || !l.is_finite() {
            return Err(Error::invalid(format!("need L >= mu > 0, got L={l}, mu={mu}")));
        }
        if !(sigma2 >= 0.0) || !(g2 >= 0.0) {
            return Err(Error::invalid("variance bounds must be nonnegative"));
        }
        Ok(ProblemConstants {
            l,
            mu,
            kappa: l / mu,
            sigma2,
            g2,
        })
    }

    pub fn with_moments(self, sigma2: f64, g2: f64) -> Result<Self> {
        ProblemConstants::new(self.l, self.mu, sigma2, g2)
    }
}

/// Component-gradient moments at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientMoments {
    /// `E_i‖∇f_i(x) − ∇f(x)‖²`
    pub variance: f64,
    /// `E_i‖∇f_i(x)‖²`
    pub second_moment: f64,
}

/// Exact moments by enumerating every component (two passes: mean, then spread).
pub fn gradient_moments(objective: &dyn Objective, x: &[f64]) -> GradientMoments {
    let n = objective.num_components();
    moments_over(objective, x, &(0..n).collect::<Vec<_>>())
}

fn moments_over(objective: &dyn Objective, x: &[f64], indices: &[usize]) -> GradientMoments {
    let d = x.len();
    let m = indices.len() as f64;
    let mut mean = vec![0.0; d];
    for &i in indices {
        objective.add_component_gradient(x, i, 1.0 / m, &mut mean);
    }
    let mut variance = 0.0;
    let mut second = 0.0;
    let mut g = vec![0.0; d];
    for &i in indices {
        g.iter_mut().for_each(|v| *v = 0.0);
        objective.add_component_gradient(x, i, 1.0, &mut g);
        second += norm_sq(&g);
        variance += g.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    GradientMoments {
        variance: variance / m,
        second_moment: second / m,
    }
}

/// Estimates `σ²`, `G²` as maxima over `points` and takes `L`, `μ` from the objective's
/// analytic curvature. Components are enumerated exactly when `trials >= n`, otherwise
/// `trials` indices are sampled uniformly per point.
pub fn estimate_constants(
    objective: &dyn Objective,
    points: &[Vec<f64>],
    trials: usize,
    seed: u64,
) -> Result<ProblemConstants> {
    if points.is_empty() {
        return Err(Error::invalid("estimate_constants needs at least one sample point"));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    for p in points {
        check_dim(objective, p)?;
    }
    let n = objective.num_components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma2: f64 = 0.0;
    let mut g2: f64 = 0.0;
    for p in points {
        let m = if trials >= n {
            gradient_moments(objective, p)
        } else {
            let idx: Vec<usize> = (0..trials).map(|_| rng.random_range(0..n)).collect();
            moments_over(objective, p, &idx)
        };
        sigma2 = sigma2.max(m.variance);
        g2 = g2.max(m.second_moment);
    }
    let c = objective.curvature();
    ProblemConstants::new(c.l, c.mu, sigma2, g2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub provenance: Provenance,
}

impl ReferenceSolution {
    /// `‖∇f(x*)‖`.
    pub fn gradient_norm(&self, objective: &dyn Objective) -> f64 {
        norm_sq(&objective.gradient(&self.x_star)).sqrt()
    }

    pub fn r0(&self, x0: &[f64]) -> f64 {
        x0.iter().zip(&self.x_star).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// Deterministic damped Newton iteration from `x0` until `‖∇f‖ ≤ tolerance`.
pub fn newton_minimize(
    objective: &dyn Objective,
    x0: &[f64],
    tolerance: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    check_dim(objective, x0)?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    if !(objective.curvature().mu > 0.0) {
        return Err(Error::Precondition(
            "reference solution needs a strongly convex objective (lambda > 0)".into(),
        ));
    }
    let mut x = x0.to_vec();
    let mut fx = objective.value(&x);
    let mut grad_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let g = objective.gradient(&x);
        grad_norm = norm_sq(&g).sqrt();
        if grad_norm <= tolerance {
            return Ok(ReferenceSolution {
                x_star: x,
                f_star: fx,
                provenance: Provenance::Numeric,
            });
        }
        let h = objective.hessian(&x);
        let chol = h
            .cholesky()
            .ok_or(Error::NonFinite("Newton system (Hessian not positive definite)"))?;
        let step = chol.solve(&DVector::from_column_slice(&g));
        let decrement = dot(&g, step.as_slice());
        let mut t = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; x.len()];
        for _ in 0..60 {
            for j in 0..x.len() {
                trial[j] = x[j] - t * step[j];
            }
            let ft = objective.value(&trial);
            if ft <= fx - 0.25 * t * decrement {
                accepted = true;
                x.copy_from_slice(&trial);
                fx = ft;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // the line search stalls once f is flat to machine precision; take the full step
            for j in 0..x.len() {
                x[j] -= step[j];
            }
            fx = objective.value(&x);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        grad_norm,
    })
}
