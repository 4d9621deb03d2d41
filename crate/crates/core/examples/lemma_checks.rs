//! Monte-Carlo checks of the inequalities behind the convergence proof on both fixtures.

use std::sync::Arc;

use localsgd::fixtures::{logistic50, standard_quadratic};
use localsgd::harness::config::LemmaConfig;
use localsgd::harness::{run_lemma_suite, Problem};

fn main() -> localsgd::Result<()> {
    let (q, sol, _) = standard_quadratic();
    let problems = [
        Problem {
            name: "quadratic".into(),
            objective: Arc::new(q),
            reference: Some(sol),
        },
        Problem {
            name: "logistic50".into(),
            objective: Arc::new(logistic50()),
            reference: None,
        },
    ];
    let settings = LemmaConfig::default();
    for p in &problems {
        println!("{}:", p.name);
        for r in run_lemma_suite(p, &settings)? {
            println!("  {r}");
        }
    }
    Ok(())
}
