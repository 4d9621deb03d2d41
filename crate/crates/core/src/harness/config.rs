//! TOML experiment configuration.
//!
//! ```toml
//! [dataset]
//! kind = "libsvm"
//! path = "w8a"
//! dimension = 300
//!
//! [sweep]
//! eps = [0.005]
//! workers = [1, 2, 4, 8]
//! h = [1, 2, 4, 8, 16]
//! batch = [4]
//!
//! [cost]
//! rho = 25
//!
//! [reference]
//! f_star = 0.126433176216545
//!
//! [output]
//! dir = "results"
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::theory::CommCost;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub lemmas: LemmaConfig,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// LIBSVM file; `lambda` defaults to `1/n`.
    Libsvm {
        path: PathBuf,
        dimension: Option<usize>,
        lambda: Option<f64>,
    },
    /// Synthetic quadratic with a known minimizer.
    Quadratic {
        dim: usize,
        mu: f64,
        l: f64,
        components: usize,
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// A bundled fixture: `logistic50` or `quadratic`.
    Fixture { name: String, lambda: Option<f64> },
}

fn default_seed() -> u64 {
    1
}

fn default_window() -> [i32; 2] {
    [-20, 20]
}

fn default_epochs() -> f64 {
    200.0
}

fn default_resolution() -> f64 {
    0.01
}

fn default_families() -> Vec<String> {
    vec!["decay".into(), "constant".into()]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
    pub workers: Vec<usize>,
    pub h: Vec<usize>,
    pub batch: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Inclusive range of exponents `i` for `c = 2^i`.
    #[serde(default = "default_window")]
    pub c_exponents: [i32; 2],
    #[serde(default)]
    pub start_exponent: i32,
    /// Step cap in epochs: `epochs·n/(K·b)` steps.
    #[serde(default = "default_epochs")]
    pub epochs_cap: f64,
    /// Relative spacing of function-value evaluations.
    #[serde(default = "default_resolution")]
    pub eval_resolution: f64,
    #[serde(default = "default_families")]
    pub families: Vec<String>,
}

fn default_rho() -> f64 {
    25.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub comm: CommCost,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            rho: default_rho(),
            comm: CommCost::default(),
        }
    }
}

fn default_tolerance() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub f_star: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        ReferenceConfig {
            f_star: None,
            tolerance: default_tolerance(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub svg: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            svg: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaConfig {
    pub trials: usize,
    pub workers: usize,
    pub h: usize,
    pub steps: usize,
    pub tau: usize,
    /// Transport lag of the asynchronous check, in steps.
    pub lag: u64,
    pub variance_workers: usize,
    pub held_out: usize,
    pub seed: u64,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        LemmaConfig {
            trials: 1000,
            workers: 2,
            h: 4,
            steps: 200,
            tau: 2,
            lag: 2,
            variance_workers: 8,
            held_out: 20,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let field = message
                .split('`')
                .nth(1)
                .map_or_else(|| "config".to_string(), str::to_string);
            Error::config(field, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let DatasetConfig::Libsvm { path: p, .. } = &mut cfg.dataset {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Libsvm { lambda, dimension, .. } => {
                if let Some(l) = lambda {
                    positive("dataset.lambda", *l)?;
                }
                if *dimension == Some(0) {
                    return Err(Error::config("dataset.dimension", "must be >= 1"));
                }
            }
            DatasetConfig::Quadratic {
                dim,
                mu,
                l,
                components,
                noise,
                ..
            } => {
                if *dim == 0 {
                    return Err(Error::config("dataset.dim", "must be >= 1"));
                }
                if *components == 0 {
                    return Err(Error::config("dataset.components", "must be >= 1"));
                }
                positive("dataset.mu", *mu)?;
                if !(l >= mu) {
                    return Err(Error::config("dataset.l", "must be >= mu"));
                }
                if !(*noise >= 0.0) {
                    return Err(Error::config("dataset.noise", "must be >= 0"));
                }
            }
            DatasetConfig::Fixture { name, lambda } => {
                if name != "logistic50" && name != "quadratic" {
                    return Err(Error::config(
                        "dataset.name",
                        format!("unknown fixture '{name}', expected logistic50 or quadratic"),
                    ));
                }
                if let Some(l) = lambda {
                    positive("dataset.lambda", *l)?;
                }
            }
        }
        if let Some(s) = &self.sweep {
            nonempty("sweep.eps", &s.eps)?;
            nonempty("sweep.workers", &s.workers)?;
            nonempty("sweep.h", &s.h)?;
            nonempty("sweep.batch", &s.batch)?;
            for e in &s.eps {
                positive("sweep.eps", *e)?;
            }
            for (field, list) in [
                ("sweep.workers", &s.workers),
                ("sweep.h", &s.h),
                ("sweep.batch", &s.batch),
            ] {
                if list.contains(&0) {
                    return Err(Error::config(field, "entries must be >= 1"));
                }
            }
            if s.c_exponents[0] > s.c_exponents[1] {
                return Err(Error::config("sweep.c_exponents", "lower exponent exceeds upper"));
            }
            if !(s.c_exponents[0]..=s.c_exponents[1]).contains(&s.start_exponent) {
                return Err(Error::config("sweep.start_exponent", "outside c_exponents"));
            }
            positive("sweep.epochs_cap", s.epochs_cap)?;
            if !(s.eval_resolution >= 0.0) {
                return Err(Error::config("sweep.eval_resolution", "must be >= 0"));
            }
            nonempty("sweep.families", &s.families)?;
            for f in &s.families {
                if f != "decay" && f != "constant" {
                    return Err(Error::config(
                        "sweep.families",
                        format!("unknown family '{f}', expected decay or constant"),
                    ));
                }
            }
        }
        if !(self.cost.rho >= 1.0) || !self.cost.rho.is_finite() {
            return Err(Error::config("cost.rho", "must be >= 1"));
        }
        if let Some(f) = self.reference.f_star {
            if !f.is_finite() {
                return Err(Error::config("reference.f_star", "must be finite"));
            }
        }
        positive("reference.tolerance", self.reference.tolerance)?;
        let l = &self.lemmas;
        if l.trials < crate::lemmas::MIN_TRIALS {
            return Err(Error::config(
                "lemmas.trials",
                format!("must be >= {}", crate::lemmas::MIN_TRIALS),
            ));
        }
        for (field, v) in [
            ("lemmas.workers", l.workers),
            ("lemmas.h", l.h),
            ("lemmas.steps", l.steps),
            ("lemmas.variance_workers", l.variance_workers),
            ("lemmas.held_out", l.held_out),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        if l.h > l.steps {
            return Err(Error::config("lemmas.h", "must not exceed lemmas.steps"));
        }
        Ok(())
    }

    pub fn sweep(&self) -> Result<&SweepConfig> {
        self.sweep
            .as_ref()
            .ok_or_else(|| Error::config("sweep", "missing [sweep] section"))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::config(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "must not be empty"));
    }
    Ok(())
}
