//! Closed-form convergence bounds and the communication/computation speedup model.

use serde::{Deserialize, Serialize};

use crate::averaging::sum_of_weights;
use crate::error::{Error, Result};
use crate::objectives::ProblemConstants;

/// Cost of one synchronization round in communicated vectors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommCost {
    /// `2(K−1)` vectors per round, as for a central aggregator.
    #[default]
    Central,
    /// `2(K−1)/K` vectors per round per worker, as for a ring all-reduce.
    RingAllReduce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Time of one communicated vector in units of one gradient evaluation.
    pub rho: f64,
    /// Target accuracy.
    pub eps: f64,
    #[serde(default)]
    pub comm: CommCost,
}

impl CostModel {
    pub fn new(rho: f64, eps: f64) -> Result<Self> {
        Self::with_comm(rho, eps, CommCost::Central)
    }

    pub fn with_comm(rho: f64, eps: f64, comm: CommCost) -> Result<Self> {
        if !(rho >= 1.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::invalid(format!("eps must be >= 0, got {eps}")));
        }
        Ok(CostModel { rho, eps, comm })
    }

    /// Relative wall-clock factor `1 + (vectors per round)·ρ/H`.
    pub fn communication_factor(&self, k: usize, h: usize) -> f64 {
        let vectors = match self.comm {
            CommCost::Central => 2.0 * (k as f64 - 1.0),
            CommCost::RingAllReduce => 2.0 * (k as f64 - 1.0) / k as f64,
        };
        1.0 + self.rho * vectors / h as f64
    }

    /// Time-to-accuracy of serial SGD over that of `K` workers with interval `H`. A single
    /// worker never communicates, so `H` has no effect at `K = 1` and `S(1) = 1`.
    pub fn speedup(&self, k: usize, h: usize) -> Result<f64> {
        check_kh(k, h)?;
        let h_eff = if k == 1 { 1 } else { h };
        let serial = accuracy_factor(self.eps, 1, 1);
        Ok(k as f64 * serial / (accuracy_factor(self.eps, h_eff, k) * self.communication_factor(k, h)))
    }
}

fn check_kh(k: usize, h: usize) -> Result<()> {
    if k == 0 || h == 0 {
        return Err(Error::invalid(format!("need K >= 1 and H >= 1, got K={k}, H={h}")));
    }
    Ok(())
}

/// `½ + ½√(1 + ε(1 + H + H²K))`
fn accuracy_factor(eps: f64, h: usize, k: usize) -> f64 {
    let (h, k) = (h as f64, k as f64);
    0.5 + 0.5 * (1.0 + eps * (1.0 + h + h * h * k)).sqrt()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn check_bound_inputs(k: usize, t: usize, b: usize, r0: f64) -> Result<()> {
    if k == 0 || t == 0 || b == 0 {
        return Err(Error::invalid(format!("need K, T, b >= 1, got K={k}, T={t}, b={b}")));
    }
    if !(r0 >= 0.0) || !r0.is_finite() {
        return Err(Error::invalid(format!("r0 must be finite and nonnegative, got {r0}")));
    }
    Ok(())
}

fn shifted_bound(
    c: &ProblemConstants,
    k: usize,
    t: usize,
    b: usize,
    a: f64,
    r0: f64,
    deviation_term: f64,
) -> Result<f64> {
    let s_t = sum_of_weights(a, t)?;
    let tf = t as f64;
    let bias = c.mu * a.powi(3) * r0 / (2.0 * s_t);
    let variance = 4.0 * tf * (tf + 2.0 * a) * (c.sigma2 / b as f64) / (c.mu * k as f64 * s_t);
    let deviation = deviation_term * tf * c.g2 * c.l / (c.mu * c.mu * s_t);
    Ok(bias + variance + deviation)
}

fn check_shift(c: &ProblemConstants, a: f64, window: usize, what: &str) -> Result<()> {
    if !(a > 16.0 * c.kappa) {
        return Err(Error::Precondition(format!(
            "a = {a} must exceed 16 kappa = {}",
            16.0 * c.kappa
        )));
    }
    if !(a > window as f64) {
        return Err(Error::Precondition(format!("a = {a} must exceed {what} = {window}")));
    }
    Ok(())
}

/// Bound on `E f(x̂_T) − f★` for synchronous local SGD with mini-batches of size `b`:
/// `μa³r0/(2S_T) + 4T(T+2a)(σ²/b)/(μKS_T) + 256T·G²H²L/(μ²S_T)`.
pub fn theorem1_bound(c: &ProblemConstants, k: usize, t: usize, h: usize, b: usize, a: f64, r0: f64) -> Result<f64> {
    check_bound_inputs(k, t, b, r0)?;
    if h == 0 {
        return Err(Error::invalid("H must be >= 1"));
    }
    check_shift(c, a, h, "H")?;
    shifted_bound(c, k, t, b, a, r0, 256.0 * (h * h) as f64)
}

/// Bound on `E f(x̂_T) − f★` for asynchronous local SGD with staleness `τ`; the last term
/// becomes `768T·G²(H+τ)²L/(μ²S_T)`.
#[allow(clippy::too_many_arguments)]
pub fn theorem2_bound(
    c: &ProblemConstants,
    k: usize,
    t: usize,
    h: usize,
    tau: usize,
    b: usize,
    a: f64,
    r0: f64,
) -> Result<f64> {
    check_bound_inputs(k, t, b, r0)?;
    if h == 0 {
        return Err(Error::invalid("H must be >= 1"));
    }
    check_shift(c, a, h + tau, "H + tau")?;
    let w = (h + tau) as f64;
    shifted_bound(c, k, t, b, a, r0, 768.0 * w * w)
}

/// Asymptotic rate with all hidden constants set to 1:
/// `(σ²/b)(1/(μKT) + (κ+H)/(μKT²)) + G²(κH²/(μT²) + (κ³+H³)/(μT³))`.
pub fn corollary_bound(c: &ProblemConstants, k: usize, t: usize, h: usize, b: usize) -> Result<f64> {
    if k == 0 || t == 0 || h == 0 || b == 0 {
        return Err(Error::invalid("need K, T, H, b >= 1"));
    }
    let (kf, tf, hf) = (k as f64, t as f64, h as f64);
    let mu = c.mu;
    let kappa = c.kappa;
    let variance = (c.sigma2 / b as f64) * (1.0 / (mu * kf * tf) + (kappa + hf) / (mu * kf * tf * tf));
    let drift = c.g2 * (kappa * hf * hf / (mu * tf * tf) + (kappa.powi(3) + hf.powi(3)) / (mu * tf.powi(3)));
    Ok(variance + drift)
}

/// `T(ε, H, K) ≈ (1/(Kε))(½ + ½√(1 + ε(1 + H + H²K)))`.
pub fn iterations_estimate(eps: f64, h: usize, k: usize) -> Result<f64> {
    check_positive("eps", eps)?;
    check_kh(k, h)?;
    Ok(accuracy_factor(eps, h, k) / (k as f64 * eps))
}

/// `S(K) = T(ε,1,1) / [T(ε,H,K)(1 + 2ρ(K−1)/H)]` with `T` from [`iterations_estimate`]; at
/// `ε = 0` this is `K/(1 + 2ρ(K−1)/H)`.
pub fn speedup(k: usize, h: usize, eps: f64, rho: f64) -> Result<f64> {
    CostModel::new(rho, eps)?.speedup(k, h)
}
