//! Parses a LIBSVM file (the bundled 50-point fixture by default), reports its shape and
//! `f(0)`, and computes the regularized logistic minimum with `λ = 1/n`.
//!
//! ```text
//! cargo run --release --example libsvm_fstar -- path/to/w8a 300
//! ```

use std::sync::Arc;

use localsgd::data::read_libsvm;
use localsgd::fixtures::logistic50_dataset;
use localsgd::harness::compute_reference_fstar;
use localsgd::objectives::{LogisticL2, Objective};

fn main() -> localsgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let data = match args.next() {
        Some(path) => read_libsvm(path, args.next().map(|d| d.parse().expect("dimension")))?,
        None => logistic50_dataset(),
    };
    let data = Arc::new(data);
    let f = LogisticL2::with_default_lambda(data.clone());
    println!("n = {}, d = {}, lambda = {:e}", data.len(), data.dim(), f.lambda());
    println!(
        "f(0) = {:.12} (ln 2 = {:.12})",
        f.value(&vec![0.0; f.dim()]),
        std::f64::consts::LN_2
    );
    let sol = compute_reference_fstar(data, f.lambda(), 1e-10)?;
    println!("f* = {:.15}, |grad f(x*)| = {:.1e}", sol.f_star, sol.gradient_norm(&f));
    Ok(())
}
