//! Reproducible experiments over `mcmc-calculus`, driven by TOML configs.
//!
//! Every run writes its reports into one output directory together with a
//! `manifest.json` that records digests of the inputs and of every file
//! written, and a pass/fail line per check. The process exit code is 0
//! exactly when every check passed.

pub mod build;
pub mod config;
pub mod experiments;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use config::{load_config, parse_config, ExperimentConfig, ExperimentKind};
pub use manifest::{CheckOutcome, RunManifest};

/// Environment variable naming the output directory.
pub const OUT_ENV: &str = "MCMC_CALCULUS_OUT";
/// Environment variable with the worker thread count.
pub const THREADS_ENV: &str = "MCMC_CALCULUS_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("{kind} failed while {stage}: {source}")]
    Run {
        kind: &'static str,
        stage: &'static str,
        #[source]
        source: mcmc_calculus::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Command-line values that take precedence over the config.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.manifest.pass {
            0
        } else {
            1
        }
    }
}

/// Output directory: flag, then environment, then config, then `out/<kind>`.
pub fn output_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV) {
        return PathBuf::from(p);
    }
    match &cfg.out {
        Some(p) => cfg.resolve(p),
        None => PathBuf::from("out").join(cfg.kind.name()),
    }
}

/// Loads `config_path`, checks it is a `kind` experiment and runs it.
pub fn run(config_path: &Path, kind: ExperimentKind, overrides: &Overrides) -> Result<RunOutcome, CliError> {
    let started = chrono::Utc::now();
    let mut cfg = load_config(config_path)?;
    if cfg.kind != kind {
        return Err(CliError::Config(vec![format!(
            "config describes a {} experiment, not {}",
            cfg.kind.name(),
            kind.name()
        )]));
    }
    if let Some(s) = overrides.seed {
        cfg.seed = s;
    }
    if let Some(r) = overrides.reps {
        match cfg.clt.as_mut() {
            Some(c) => c.replications = r,
            None => return Err(CliError::Config(vec!["--reps applies to clt-report configs only".into()])),
        }
        let errs = cfg.validate();
        if !errs.is_empty() {
            return Err(CliError::Config(errs));
        }
    }
    let out_dir = output_dir(&cfg, overrides.out.as_deref());
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io { path: out_dir.clone(), source })?;
    let mut ctx = experiments::Context::new(&cfg, out_dir.clone());
    ctx.record_input(config_path)?;
    experiments::dispatch(&mut ctx)?;
    let manifest = ctx.finish(config_path, started)?;
    Ok(RunOutcome { manifest, out_dir })
}

/// Sizes the global worker pool from the environment, once.
pub fn init_threads() -> Result<(), CliError> {
    if let Some(v) = std::env::var_os(THREADS_ENV) {
        let n: usize = v
            .to_string_lossy()
            .parse()
            .map_err(|_| CliError::Config(vec![format!("{THREADS_ENV} must be a positive integer")]))?;
        // A second initialization in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    Ok(())
}
