//! Tuning `c` over `2^i` for both stepsize families and reading off iterations to accuracy.

use localsgd::fixtures::logistic50;
use localsgd::harness::grid::{GridWindow, StepFamily};
use localsgd::harness::{compute_reference_fstar, grid_search_stepsize, Cell, SearchSettings};

fn main() -> localsgd::Result<()> {
    let f = logistic50();
    let sol = compute_reference_fstar(f.dataset().clone().into(), f.lambda(), 1e-12)?;
    let settings = SearchSettings {
        epochs_cap: 200.0,
        eval_resolution: 0.01,
        seed: 1,
        window: GridWindow::new(-20, 20, 0)?,
        families: vec![StepFamily::Decay, StepFamily::Constant],
    };
    for (workers, h) in [(1, 1), (2, 4), (4, 4), (8, 8)] {
        let cell = Cell {
            workers,
            h,
            batch: 1,
            eps: 1e-3,
        };
        match grid_search_stepsize(&f, sol.f_star, cell, &settings)? {
            Some(ch) => println!(
                "K={workers} H={h}: {} c=2^{} -> T* = {}",
                ch.family.name(),
                ch.exponent,
                ch.iterations
            ),
            None => println!("K={workers} H={h}: unreachable within the step cap"),
        }
    }
    Ok(())
}
