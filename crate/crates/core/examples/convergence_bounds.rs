//! Bound evaluators and the speedup model for the quadratic fixture's constants.

use localsgd::fixtures::standard_quadratic;
use localsgd::schedules::minimal_shift;
use localsgd::theory::{corollary_bound, iterations_estimate, speedup, theorem1_bound, theorem2_bound};

fn main() -> localsgd::Result<()> {
    let (_, sol, c) = standard_quadratic();
    let r0 = sol.r0(&[0.0; 10]);
    println!("L={} mu={} sigma2={:.3} G2={:.3}", c.l, c.mu, c.sigma2, c.g2);
    println!("   K      T    H   sync bound   async bound (tau=2)   asymptotic");
    for (k, t) in [(1, 10_000), (4, 10_000), (16, 100_000)] {
        for h in [1, 8, ((t / k) as f64).sqrt() as usize] {
            let a = minimal_shift(c.kappa, h + 2);
            println!(
                "{k:>4} {t:>6} {h:>4}   {:.3e}    {:.3e}             {:.3e}",
                theorem1_bound(&c, k, t, h, 1, a, r0)?,
                theorem2_bound(&c, k, t, h, 2, 1, a, r0)?,
                corollary_bound(&c, k, t, h, 1)?
            );
        }
    }
    println!("\nspeedup, rho = 25");
    for eps in [0.0, 0.005] {
        for h in [1, 4, 16, 64] {
            let row: Vec<String> = [1, 2, 4, 8, 16, 32]
                .iter()
                .map(|&k| format!("{:6.2}", speedup(k, h, eps, 25.0).unwrap()))
                .collect();
            println!("eps={eps:<6} H={h:<3} {}", row.join(" "));
        }
    }
    println!("\nT(0.005, 4, 8) ~ {:.0} iterations", iterations_estimate(0.005, 4, 8)?);
    Ok(())
}
