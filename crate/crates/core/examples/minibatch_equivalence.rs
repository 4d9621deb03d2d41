//! Averaging after every step turns local SGD into mini-batch SGD with batch `K·b` when
//! both draw from the same per-worker streams.

use localsgd::fixtures::logistic50;
use localsgd::schedules::{StepSchedule, SyncSchedule};
use localsgd::sync_engine::{run_local_sgd, run_minibatch_sgd, RecordOptions, RunConfig};

fn main() -> localsgd::Result<()> {
    let f = logistic50();
    let steps = 200;
    let step = StepSchedule::constant(0.5)?;
    for (k, b) in [(2, 1), (4, 1), (4, 4)] {
        let cfg = RunConfig::new(k, SyncSchedule::every_step(steps)?, step, 3)
            .with_batch(b)
            .with_record(RecordOptions {
                iterates: true,
                virtual_seq: false,
            });
        let local = run_local_sgd(&cfg, &f)?.iterates.expect("recorded");
        let mb = run_minibatch_sgd(&f, k, b, steps, &step, 3, None)?;
        let diff = local
            .iter()
            .zip(&mb)
            .flat_map(|(ws, x)| ws.iter().flat_map(move |w| w.iter().zip(x).map(|(u, v)| (u - v).abs())))
            .fold(0.0, f64::max);
        println!("K={k} b={b}: max |local - minibatch| = {diff:.2e}");
    }
    Ok(())
}
