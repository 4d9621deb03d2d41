//! Block assignment when one worker is twice as fast: it picks up blocks of the slower
//! worker's sequence, and the sequences stay within a bounded lag of each other.

use localsgd::async_engine::load_balanced_assignment;

fn main() -> localsgd::Result<()> {
    let h = 4;
    let plan = load_balanced_assignment(&[2, 1], h, 12 * h)?;
    println!("worker  sequence  steps      time");
    for b in &plan.blocks {
        println!(
            "{:>6}  {:>8}  {:>3}..{:<3}  {:>3}..{:<3}",
            b.worker, b.sequence, b.start_step, b.end_step, b.start_time, b.end_time
        );
    }
    println!("lag bound {} steps (H = {h})", plan.lag_bound);
    Ok(())
}
