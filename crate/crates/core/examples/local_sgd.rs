//! Synchronous local SGD on the noisy quadratic fixture with four workers that average
//! every eight steps.

use localsgd::fixtures::standard_quadratic;
use localsgd::objectives::Objective;
use localsgd::schedules::{minimal_shift, StepSchedule, SyncSchedule};
use localsgd::sync_engine::{run_local_sgd, RunConfig};

fn main() -> localsgd::Result<()> {
    let (q, sol, c) = standard_quadratic();
    let (k, t, h) = (4, 2000, 8);
    let step = StepSchedule::theorem_decay(c.mu, minimal_shift(c.kappa, h))?;
    let cfg = RunConfig::new(k, SyncSchedule::regular(t, h)?, step, 7);
    let trace = run_local_sgd(&cfg, &q)?;

    println!("K={k} T={t} H={h}: {} communication rounds", trace.comm_rounds);
    for e in trace.evaluations.iter().filter(|e| e.step % 400 == 0) {
        println!("  t={:>5}  best f - f* = {:.3e}", e.step, e.best() - sol.f_star);
    }
    let xhat = trace.theorem_average.expect("theorem stepsizes");
    println!("weighted output average: f - f* = {:.3e}", q.value(&xhat) - sol.f_star);
    let worst_dev = trace.deviation.iter().copied().fold(0.0, f64::max);
    println!("largest worker deviation from the mean: {worst_dev:.3e}");
    Ok(())
}
