//! Runs a full sweep from a TOML config (a small built-in one by default) and prints the
//! measured speedup table next to the model.
//!
//! ```text
//! cargo run --release --example speedup_experiment -- crates/core/configs/w8a.toml
//! ```

use localsgd::harness::config::ExperimentConfig;
use localsgd::harness::run_experiment;

const DEFAULT: &str = r#"
[dataset]
kind = "fixture"
name = "logistic50"

[sweep]
eps = [0.005]
workers = [1, 2, 4, 8]
h = [1, 2, 4, 8]
batch = [1]

[output]
svg = false
"#;

fn main() -> localsgd::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::from_toml(DEFAULT)?,
    };
    if std::env::args().nth(1).is_none() {
        cfg.output.dir = std::env::temp_dir().join("localsgd-speedup");
    }
    let out = run_experiment(&cfg)?;
    println!(" K  H   b   eps      T*   speedup  model");
    for row in &out.rows {
        let model = out
            .theory
            .iter()
            .find(|m| m.workers == row.workers && m.h == row.h && m.eps == row.eps)
            .expect("same grid");
        println!(
            "{:>2} {:>2} {:>3} {:<7} {:>6} {:>8} {:>6.3}",
            row.workers,
            row.h,
            row.b,
            row.eps,
            row.iterations.map_or("-".into(), |t| t.to_string()),
            row.speedup.map_or("-".into(), |s| format!("{s:.3}")),
            model.speedup
        );
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
