//! Experiment harness over `plgd-core`: TOML configs in, trace CSV, bound
//! CSV and a deterministic JSON report out.
//!
//! - [`config`]: the config schema.
//! - [`data`]: dataset and parameter-snapshot files, synthetic datasets.
//! - [`experiment`]: problem assembly, certificates and the run pipeline.
//! - [`report`]: output files.
//! - [`sweep`]: one-parameter sweeps.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use error::CliError;

use config::ExperimentConfig;
use experiment::{execute, Mode, Record};

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = o.seed {
        cfg.problem.seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

/// `run` / `check`: loads, executes and writes into the output directory.
pub fn run_config(path: &Path, o: &Overrides, mode: Mode) -> Result<Record, CliError> {
    let cfg = load_config(path, o)?;
    let dir = cfg.output.dir.clone();
    let record = execute(cfg, mode)?;
    report::write_all(&dir, &record)?;
    Ok(record)
}
