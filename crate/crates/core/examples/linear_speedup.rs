//! Iterations to accuracy on the noisy quadratic for one worker and for K workers with
//! `H = ⌊√(T*/K)⌋`, each with its own tuned stepsize. `T*` is the median over seeds.
//!
//! ```text
//! cargo run --release --example linear_speedup -- 3e-5 8 9
//! ```

use localsgd::fixtures::standard_quadratic;
use localsgd::harness::grid::{grid_search, grid_value, GridChoice, GridWindow, StepFamily};
use localsgd::harness::{iterations_for, Cell, SearchSettings};
use localsgd::objectives::Objective;
use rayon::prelude::*;

fn median_search(
    obj: &dyn Objective,
    f_star: f64,
    cell: Cell,
    settings: &SearchSettings,
    seeds: u64,
) -> localsgd::Result<Option<GridChoice>> {
    grid_search(&settings.families, settings.window, |family, i| {
        let mut hits = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let st = SearchSettings {
                    seed: s + 1,
                    ..settings.clone()
                };
                Ok(iterations_for(obj, f_star, cell, family, grid_value(i), &st)?.unwrap_or(usize::MAX))
            })
            .collect::<localsgd::Result<Vec<_>>>()?;
        hits.sort_unstable();
        let m = hits[hits.len() / 2];
        Ok((m != usize::MAX).then_some(m))
    })
}

fn main() -> localsgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let eps: f64 = args.next().map_or(1e-3, |s| s.parse().expect("eps"));
    let k: usize = args.next().map_or(8, |s| s.parse().expect("K"));
    let seeds: u64 = args.next().map_or(9, |s| s.parse().expect("seeds"));

    let (q, sol, _) = standard_quadratic();
    let settings = SearchSettings {
        epochs_cap: 2000.0,
        eval_resolution: 0.01,
        seed: 1,
        window: GridWindow::new(-20, 4, -6)?,
        families: vec![StepFamily::Decay, StepFamily::Constant],
    };
    let single = median_search(
        &q,
        sol.f_star,
        Cell {
            workers: 1,
            h: 1,
            batch: 1,
            eps,
        },
        &settings,
        seeds,
    )?
    .expect("K=1 reaches eps");
    let h = ((single.iterations as f64 / k as f64).sqrt() as usize).max(1);
    let many = median_search(
        &q,
        sol.f_star,
        Cell {
            workers: k,
            h,
            batch: 1,
            eps,
        },
        &settings,
        seeds,
    )?;
    println!("eps = {eps}");
    println!(
        "K=1: T* = {} ({} c = {})",
        single.iterations,
        single.family.name(),
        single.c
    );
    match many {
        Some(m) => println!(
            "K={k}, H={h}: T* = {} ({} c = {}), reduction {:.2}x",
            m.iterations,
            m.family.name(),
            m.c,
            single.iterations as f64 / m.iterations as f64
        ),
        None => println!("K={k}, H={h}: unreachable"),
    }
    Ok(())
}
