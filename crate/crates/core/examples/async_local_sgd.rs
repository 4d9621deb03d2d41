//! Asynchronous local SGD: staggered synchronization, a fixed transport lag, and a
//! declared staleness bound checked against the write log. Staggering alone already makes
//! reads up to `H − 1` steps stale.

use localsgd::async_engine::{
    assignment_plan, measured_delay, run_async_local_sgd, staggered_schedule, DelayModel, Placement,
};
use localsgd::fixtures::standard_quadratic;
use localsgd::objectives::Objective;
use localsgd::schedules::{minimal_shift, StepSchedule, SyncSchedule};
use localsgd::sync_engine::RunConfig;

fn main() -> localsgd::Result<()> {
    let (q, sol, c) = standard_quadratic();
    let (k, t, h, tau) = (4, 1000, 8, 10);
    let syncs = (0..k)
        .map(|w| staggered_schedule(t, h, w * h / k))
        .collect::<localsgd::Result<Vec<_>>>()?;
    let step = StepSchedule::theorem_decay(c.mu, minimal_shift(c.kappa, h + tau))?;
    let cfg = RunConfig::new(k, SyncSchedule::regular(t, h)?, step, 11);

    for lag in [0, 2, 4] {
        let run = run_async_local_sgd(&cfg, &syncs, DelayModel::fixed(lag, tau), &Placement::uniform(k), &q)?;
        println!(
            "lag {lag}: measured staleness {} (rescan {}), f(aggregate) - f* = {:.3e}",
            run.measured_delay,
            measured_delay(&run.log)?,
            q.value(&run.aggregate) - sol.f_star
        );
    }
    match run_async_local_sgd(&cfg, &syncs, DelayModel::fixed(8, tau), &Placement::uniform(k), &q) {
        Err(e) => println!("lag 8: {e}"),
        Ok(_) => println!("lag 8: within tau"),
    }

    // sequences served by the fast worker run ahead of the others by up to the plan's lag bound
    let balanced = Placement::Balanced {
        speeds: vec![2, 1, 1, 1],
    };
    let wide = assignment_plan(&balanced, &syncs)?.lag_bound + h;
    let step = StepSchedule::theorem_decay(c.mu, minimal_shift(c.kappa, h + wide))?;
    let cfg = RunConfig::new(k, SyncSchedule::regular(t, h)?, step, 11);
    let run = run_async_local_sgd(&cfg, &syncs, DelayModel::fixed(1, wide), &balanced, &q)?;
    println!(
        "one fast worker, load balanced: lag bound {} steps, staleness {}",
        run.plan.lag_bound, run.measured_delay
    );
    Ok(())
}
