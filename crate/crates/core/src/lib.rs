//! Simulation of synchronous and asynchronous local SGD on strongly convex finite sums,
//! with checks of the supporting inequalities, closed-form convergence and speedup bounds,
//! and a grid-search experiment harness.
//!
//! ```
//! use localsgd::{fixtures, schedules::{StepSchedule, SyncSchedule}, sync_engine::{run_local_sgd, RunConfig}};
//!
//! let (objective, _, _) = fixtures::standard_quadratic();
//! let cfg = RunConfig::new(
//!     4,
//!     SyncSchedule::regular(200, 8).unwrap(),
//!     StepSchedule::theorem_decay(1.0, 65.0).unwrap(),
//!     7,
//! );
//! let trace = run_local_sgd(&cfg, &objective).unwrap();
//! assert_eq!(trace.comm_rounds, 25);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod async_engine;
pub mod averaging;
pub mod data;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod lemmas;
pub mod linalg;
pub mod objectives;
pub mod schedules;
pub mod sync_engine;
pub mod theory;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sampling stream `k` of the master `seed`.
pub fn worker_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}
