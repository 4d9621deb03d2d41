//! Config-driven experiments: stepsize grid search, iterations to accuracy, measured and
//! modelled speedup tables, and the lemma suite.

pub mod config;
pub mod grid;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::async_engine::{staggered_schedule, DelayModel, Placement};
use crate::data::{read_libsvm, Dataset};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::lemmas::{self, CheckReport, RecursionParams};
use crate::objectives::{newton_minimize, LogisticL2, Objective, ReferenceSolution};
use crate::schedules::SyncSchedule;
use crate::sync_engine::{iterations_to_accuracy, run_local_sgd, EvalPolicy, RecordOptions, RunConfig, StopRule};
use crate::theory::{self, CostModel};

use config::{DatasetConfig, ExperimentConfig, LemmaConfig, SweepConfig};
use grid::{grid_search, GridChoice, GridWindow, StepFamily};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "LOCALSGD_THREADS";

/// Thread pool sized by `LOCALSGD_THREADS` (all cores when unset or invalid).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))
}

/// An objective together with whatever is known about its minimizer.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub objective: Arc<dyn Objective>,
    pub reference: Option<ReferenceSolution>,
}

pub fn load_problem(dataset: &DatasetConfig) -> Result<Problem> {
    match dataset {
        DatasetConfig::Libsvm {
            path,
            dimension,
            lambda,
        } => {
            let data = Arc::new(read_libsvm(path, *dimension)?);
            let lambda = lambda.unwrap_or_else(|| data.default_lambda());
            Ok(Problem {
                name: path.display().to_string(),
                objective: Arc::new(LogisticL2::new(data, lambda)?),
                reference: None,
            })
        }
        DatasetConfig::Quadratic {
            dim,
            mu,
            l,
            components,
            noise,
            seed,
        } => {
            let (q, sol, _) = crate::objectives::make_quadratic(*dim, *mu, *l, *components, *noise, *seed)?;
            Ok(Problem {
                name: "quadratic".into(),
                objective: Arc::new(q),
                reference: Some(sol),
            })
        }
        DatasetConfig::Fixture { name, lambda } => match name.as_str() {
            "logistic50" => {
                let data = Arc::new(fixtures::logistic50_dataset());
                let lambda = lambda.unwrap_or_else(|| data.default_lambda());
                Ok(Problem {
                    name: name.clone(),
                    objective: Arc::new(LogisticL2::new(data, lambda)?),
                    reference: None,
                })
            }
            "quadratic" => {
                let (q, sol, _) = fixtures::standard_quadratic();
                Ok(Problem {
                    name: name.clone(),
                    objective: Arc::new(q),
                    reference: Some(sol),
                })
            }
            other => Err(Error::config("dataset.name", format!("unknown fixture '{other}'"))),
        },
    }
}

/// Minimizer of the regularized logistic loss on `dataset` by damped Newton from zero.
pub fn compute_reference_fstar(dataset: Arc<Dataset>, lambda: f64, tolerance: f64) -> Result<ReferenceSolution> {
    let f = LogisticL2::new(dataset, lambda)?;
    newton_minimize(&f, &vec![0.0; f.dim()], tolerance, 200)
}

/// Reference solution for `problem`: analytic if known, otherwise computed numerically.
pub fn reference_solution(problem: &Problem, tolerance: f64) -> Result<ReferenceSolution> {
    match &problem.reference {
        Some(r) => Ok(r.clone()),
        None => {
            let obj = problem.objective.as_ref();
            newton_minimize(obj, &vec![0.0; obj.dim()], tolerance, 200)
        }
    }
}

/// One sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Cell {
    pub workers: usize,
    pub h: usize,
    pub batch: usize,
    pub eps: f64,
}

/// `⌈epochs·n/(K·b)⌉` steps.
pub fn step_cap(n: usize, workers: usize, batch: usize, epochs: f64) -> usize {
    ((epochs * n as f64) / (workers * batch) as f64).ceil().max(1.0) as usize
}

/// Settings shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub epochs_cap: f64,
    pub eval_resolution: f64,
    pub seed: u64,
    pub window: GridWindow,
    pub families: Vec<StepFamily>,
}

impl SearchSettings {
    pub fn from_sweep(s: &SweepConfig) -> Result<Self> {
        Ok(SearchSettings {
            epochs_cap: s.epochs_cap,
            eval_resolution: s.eval_resolution,
            seed: s.seed,
            window: GridWindow::new(s.c_exponents[0], s.c_exponents[1], s.start_exponent)?,
            families: s.families.iter().map(|f| StepFamily::parse(f)).collect::<Result<_>>()?,
        })
    }
}

/// Iterations to reach `f − f★ ≤ ε` for one stepsize choice, or `None` within the step cap.
pub fn iterations_for(
    objective: &dyn Objective,
    f_star: f64,
    cell: Cell,
    family: StepFamily,
    c: f64,
    settings: &SearchSettings,
) -> Result<Option<usize>> {
    let n = objective.num_components();
    let horizon = step_cap(n, cell.workers, cell.batch, settings.epochs_cap).max(cell.h);
    let cfg = RunConfig::new(
        cell.workers,
        SyncSchedule::regular(horizon, cell.h)?,
        family.schedule(c, n)?,
        settings.seed,
    )
    .with_batch(cell.batch)
    .with_record(RecordOptions::default())
    .with_eval(EvalPolicy::Relative {
        resolution: settings.eval_resolution,
    })
    .with_stop(StopRule { eps: cell.eps, f_star });
    let trace = run_local_sgd(&cfg, objective)?;
    iterations_to_accuracy(&trace, cell.eps, f_star)
}

/// Best `(family, c, T*)` for one cell, or `None` when no grid value reaches `ε`.
pub fn grid_search_stepsize(
    objective: &dyn Objective,
    f_star: f64,
    cell: Cell,
    settings: &SearchSettings,
) -> Result<Option<GridChoice>> {
    grid_search(&settings.families, settings.window, |family, i| {
        iterations_for(objective, f_star, cell, family, grid::grid_value(i), settings)
    })
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    #[serde(rename = "K")]
    pub workers: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub b: usize,
    pub eps: f64,
    pub family: Option<&'static str>,
    pub c: Option<f64>,
    pub iterations: Option<usize>,
    pub gradient_evaluations: Option<usize>,
    pub comm_rounds: Option<usize>,
    pub wall_clock: Option<f64>,
    pub speedup: Option<f64>,
    pub reachable: bool,
    pub step_cap: usize,
}

/// One line of `speedup_theory.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    #[serde(rename = "K")]
    pub workers: usize,
    #[serde(rename = "H")]
    pub h: usize,
    pub eps: f64,
    pub rho: f64,
    pub speedup: f64,
    pub iterations_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub theory: Vec<TheoryRow>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutput {
    pub fn has_unreachable(&self) -> bool {
        self.rows.iter().any(|r| !r.reachable)
    }
}

fn speedup_ratio(baseline: f64, wall: f64) -> f64 {
    if wall == 0.0 {
        if baseline == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        baseline / wall
    }
}

/// Runs the sweep of `cfg` on `problem` and returns the rows without writing files.
pub fn run_sweep(cfg: &ExperimentConfig, problem: &Problem) -> Result<(Vec<ResultRow>, Vec<TheoryRow>)> {
    let sweep = cfg.sweep()?;
    let settings = SearchSettings::from_sweep(sweep)?;
    let cost = CostModel::with_comm(cfg.cost.rho, 0.0, cfg.cost.comm)?;
    let f_star = match cfg.reference.f_star {
        Some(f) => f,
        None => reference_solution(problem, cfg.reference.tolerance)?.f_star,
    };
    let objective = problem.objective.as_ref();
    let n = objective.num_components();

    let mut cells = Vec::new();
    for &eps in &sweep.eps {
        for &b in &sweep.batch {
            for &k in &sweep.workers {
                for &h in &sweep.h {
                    cells.push(Cell {
                        workers: k,
                        h,
                        batch: b,
                        eps,
                    });
                }
            }
        }
    }
    let mut jobs = cells.clone();
    for &eps in &sweep.eps {
        for &b in &sweep.batch {
            let base = Cell {
                workers: 1,
                h: 1,
                batch: b,
                eps,
            };
            if !jobs.contains(&base) {
                jobs.push(base);
            }
        }
    }

    let pool = thread_pool()?;
    let outcomes: Vec<Option<GridChoice>> = pool.install(|| {
        jobs.par_iter()
            .map(|&cell| {
                let choice = grid_search_stepsize(objective, f_star, cell, &settings)?;
                if let Some(ch) = choice {
                    let again = iterations_for(objective, f_star, cell, ch.family, ch.c, &settings)?;
                    if again != Some(ch.iterations) {
                        return Err(Error::invalid(format!(
                            "confirmation run for K={} H={} b={} eps={} gave {:?}, search gave {}",
                            cell.workers, cell.h, cell.batch, cell.eps, again, ch.iterations
                        )));
                    }
                }
                Ok(choice)
            })
            .collect::<Result<_>>()
    })?;

    let key = |c: &Cell| (c.workers, c.h, c.batch, c.eps.to_bits());
    let by_cell: BTreeMap<_, Option<GridChoice>> = jobs.iter().zip(&outcomes).map(|(c, o)| (key(c), *o)).collect();

    let rows = cells
        .iter()
        .map(|cell| {
            let choice = by_cell[&key(cell)];
            let base = by_cell[&(1, 1, cell.batch, cell.eps.to_bits())];
            let cap = step_cap(n, cell.workers, cell.batch, settings.epochs_cap).max(cell.h);
            match choice {
                Some(ch) => {
                    let wall = ch.iterations as f64 * cost.communication_factor(cell.workers, cell.h);
                    let speedup = base.map(|b| speedup_ratio(b.iterations as f64, wall));
                    ResultRow {
                        workers: cell.workers,
                        h: cell.h,
                        b: cell.batch,
                        eps: cell.eps,
                        family: Some(ch.family.name()),
                        c: Some(ch.c),
                        iterations: Some(ch.iterations),
                        gradient_evaluations: Some(ch.iterations * cell.workers * cell.batch),
                        comm_rounds: Some(ch.iterations / cell.h),
                        wall_clock: Some(wall),
                        speedup,
                        reachable: true,
                        step_cap: cap,
                    }
                }
                None => ResultRow {
                    workers: cell.workers,
                    h: cell.h,
                    b: cell.batch,
                    eps: cell.eps,
                    family: None,
                    c: None,
                    iterations: None,
                    gradient_evaluations: None,
                    comm_rounds: None,
                    wall_clock: None,
                    speedup: None,
                    reachable: false,
                    step_cap: cap,
                },
            }
        })
        .collect();

    let mut theory_rows = Vec::new();
    for &eps in &sweep.eps {
        for &k in &sweep.workers {
            for &h in &sweep.h {
                let model = CostModel::with_comm(cfg.cost.rho, eps, cfg.cost.comm)?;
                theory_rows.push(TheoryRow {
                    workers: k,
                    h,
                    eps,
                    rho: cfg.cost.rho,
                    speedup: model.speedup(k, h)?,
                    iterations_estimate: theory::iterations_estimate(eps, h, k)?,
                });
            }
        }
    }
    Ok((rows, theory_rows))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Full experiment: sweep, `results.csv`, `speedup_theory.csv` and optional SVG charts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let problem = load_problem(&cfg.dataset)?;
    let (rows, theory_rows) = run_sweep(cfg, &problem)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let results = dir.join("results.csv");
    write_csv(&results, &rows)?;
    files.push(results);
    let theory_path = dir.join("speedup_theory.csv");
    write_csv(&theory_path, &theory_rows)?;
    files.push(theory_path);

    if cfg.output.svg {
        let sweep = cfg.sweep()?;
        for &eps in &sweep.eps {
            for &b in &sweep.batch {
                let series: Vec<svg::Series> = sweep
                    .h
                    .iter()
                    .map(|&h| svg::Series {
                        label: format!("H={h}"),
                        points: rows
                            .iter()
                            .filter(|r| r.h == h && r.b == b && r.eps == eps)
                            .filter_map(|r| r.speedup.map(|s| (r.workers as f64, s)))
                            .collect(),
                    })
                    .collect();
                let path = dir.join(format!("speedup_b{b}_eps{eps}.svg"));
                write_text(
                    &path,
                    &svg::line_chart(
                        &format!("measured speedup, b={b}, eps={eps}"),
                        "K",
                        "speedup",
                        &series,
                        true,
                    ),
                )?;
                files.push(path);
            }
            let series: Vec<svg::Series> = sweep
                .h
                .iter()
                .map(|&h| svg::Series {
                    label: format!("H={h}"),
                    points: theory_rows
                        .iter()
                        .filter(|r| r.h == h && r.eps == eps)
                        .map(|r| (r.workers as f64, r.speedup))
                        .collect(),
                })
                .collect();
            let path = dir.join(format!("speedup_theory_eps{eps}.svg"));
            write_text(
                &path,
                &svg::line_chart(
                    &format!("modelled speedup, eps={eps}, rho={}", cfg.cost.rho),
                    "K",
                    "speedup",
                    &series,
                    true,
                ),
            )?;
            files.push(path);
        }
    }
    Ok(ExperimentOutput {
        rows,
        theory: theory_rows,
        files,
    })
}

/// Loads `path` and runs the experiment it describes.
pub fn run_experiment_file(path: impl AsRef<Path>) -> Result<ExperimentOutput> {
    run_experiment(&ExperimentConfig::load(path)?)
}

/// Runs all five lemma checks on `problem` with the theorem stepsizes.
pub fn run_lemma_suite(problem: &Problem, settings: &LemmaConfig) -> Result<Vec<CheckReport>> {
    let obj = problem.objective.as_ref();
    let reference = reference_solution(problem, 1e-10)?;
    let runs = settings.trials;
    let pool = thread_pool()?;
    pool.install(|| {
        let mut reports = Vec::new();

        // worker iterates in the middle of a block, where they differ
        let probe_sync = SyncSchedule::regular(settings.steps, settings.h)?;
        let probe = lemmas::theorem_config(obj, settings.variance_workers, probe_sync, settings.h, settings.seed)?
            .with_record(RecordOptions {
                iterates: true,
                virtual_seq: false,
            });
        let its = run_local_sgd(&probe, obj)?.iterates.expect("recorded");
        let t_probe = (settings.h.saturating_sub(1)).max(1).min(settings.steps);
        reports.push(lemmas::check_variance_reduction(
            obj,
            &its[t_probe],
            runs,
            settings.seed,
        )?);

        let sync = SyncSchedule::regular(settings.steps, settings.h)?;
        let cfg = lemmas::theorem_config(obj, settings.workers, sync, settings.h, settings.seed)?;
        let constants = lemmas::held_out_constants(&cfg, obj, settings.held_out, 1)?;
        reports.push(lemmas::check_deviation_bound(&cfg, obj, &constants, runs)?);
        reports.push(lemmas::check_perturbed_inequality(&cfg, obj, &reference, runs)?);

        let a = cfg.stepsize.shift().expect("theorem stepsize");
        let params = RecursionParams {
            shift: a,
            mu: constants.mu,
            a_coef: 0.5,
            b_coef: constants.sigma2 / settings.workers as f64,
            c_coef: 8.0 * constants.g2 * (settings.h * settings.h) as f64 * constants.l,
            horizon: settings.steps,
        };
        let r0 = reference.r0(&vec![0.0; obj.dim()]);
        reports.push(lemmas::check_recursion_random(&params, r0, runs, settings.seed)?);

        let k = settings.workers;
        let syncs: Vec<SyncSchedule> = (0..k)
            .map(|w| staggered_schedule(settings.steps, settings.h, w * settings.h / k))
            .collect::<Result<_>>()?;
        let delay = DelayModel::fixed(settings.lag, settings.tau);
        let placement = Placement::uniform(k);
        let async_cfg = lemmas::theorem_config(
            obj,
            k,
            SyncSchedule::regular(settings.steps, settings.h)?,
            settings.h + settings.tau,
            settings.seed,
        )?;
        let async_constants =
            lemmas::held_out_async_constants(&async_cfg, &syncs, delay, &placement, obj, settings.held_out, 1)?;
        reports.push(lemmas::check_async_deviation(
            &async_cfg,
            &syncs,
            delay,
            &placement,
            obj,
            &async_constants,
            runs,
        )?);
        Ok(reports)
    })
}

/// Lemma suite for the problem in `cfg`; writes `lemmas.csv` into the output directory.
pub fn verify_lemmas(cfg: &ExperimentConfig) -> Result<Vec<CheckReport>> {
    let problem = load_problem(&cfg.dataset)?;
    let reports = run_lemma_suite(&problem, &cfg.lemmas)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("lemmas.csv"), &reports)?;
    Ok(reports)
}
