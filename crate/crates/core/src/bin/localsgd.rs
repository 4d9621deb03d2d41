use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use localsgd::data::read_libsvm;
use localsgd::harness::config::ExperimentConfig;
use localsgd::harness::{self, compute_reference_fstar};
use localsgd::theory::{self, CommCost, CostModel};

const CONFIG_ERROR: u8 = 1;
const UNREACHABLE: u8 = 2;
const LEMMA_FAILURE: u8 = 3;

#[derive(Parser)]
#[command(name = "localsgd", version, about = "Local SGD simulator and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a TOML config and write results.csv.
    Run { config: PathBuf },
    /// Run the Monte-Carlo lemma checks and write lemmas.csv.
    VerifyLemmas { config: PathBuf },
    /// Print the modelled speedup table as CSV.
    Theory {
        #[arg(long = "K", value_delimiter = ',', num_args = 1.., required = true)]
        k: Vec<usize>,
        #[arg(long = "H", value_delimiter = ',', num_args = 1.., required = true)]
        h: Vec<usize>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "0")]
        eps: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "25")]
        rho: Vec<f64>,
        #[arg(long, value_enum, default_value = "central")]
        comm: Comm,
    },
    /// Minimize the regularized logistic loss on a LIBSVM file and print f★.
    Fstar {
        dataset: PathBuf,
        /// Defaults to 1/n.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        dimension: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Comm {
    Central,
    Ring,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn execute(command: Command) -> localsgd::Result<u8> {
    match command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = harness::run_experiment(&cfg)?;
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            let unreachable = out.rows.iter().filter(|r| !r.reachable).count();
            if unreachable > 0 {
                eprintln!("{unreachable} configuration(s) did not reach the target accuracy");
                return Ok(UNREACHABLE);
            }
            Ok(0)
        }
        Command::VerifyLemmas { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let reports = harness::verify_lemmas(&cfg)?;
            for r in &reports {
                println!("{r}");
            }
            Ok(if reports.iter().all(|r| r.pass) {
                0
            } else {
                LEMMA_FAILURE
            })
        }
        Command::Theory { k, h, eps, rho, comm } => {
            let comm = match comm {
                Comm::Central => CommCost::Central,
                Comm::Ring => CommCost::RingAllReduce,
            };
            println!("K,H,eps,rho,speedup,iterations_estimate");
            for &r in &rho {
                for &e in &eps {
                    let model = CostModel::with_comm(r, e, comm)?;
                    for &hh in &h {
                        for &kk in &k {
                            let s = model.speedup(kk, hh)?;
                            let est = if e > 0.0 {
                                theory::iterations_estimate(e, hh, kk)?.to_string()
                            } else {
                                String::new()
                            };
                            println!("{kk},{hh},{e},{r},{s},{est}");
                        }
                    }
                }
            }
            Ok(0)
        }
        Command::Fstar {
            dataset,
            lambda,
            dimension,
            tolerance,
        } => {
            let data = Arc::new(read_libsvm(&dataset, dimension)?);
            let lambda = lambda.unwrap_or_else(|| data.default_lambda());
            println!("n = {}, d = {}, lambda = {lambda:e}", data.len(), data.dim());
            let sol = compute_reference_fstar(data, lambda, tolerance)?;
            println!("f_star = {:.15}", sol.f_star);
            Ok(0)
        }
    }
}
