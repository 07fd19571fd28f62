//! Workbench for the fkns laboratory: configuration, run folders, CSV and
//! SVG reports, and the subcommand pipelines behind the `fkns` binary.

pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;

use std::path::PathBuf;

use anyhow::{Context, Result};

pub use commands::{Command, Outcome};
use config::Config;
use experiment::Experiment;
use output::RunDir;

/// Everything the command line can specify.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Invocation {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            config: None,
            sets: Vec::new(),
            seed: None,
            workers: None,
            out: None,
        }
    }

    /// Defaults, then the config file, then `--set`, then `--seed` and
    /// `--workers`.
    pub fn resolve_config(&self) -> Result<Config> {
        let mut c = Config::default();
        if let Some(p) = &self.config {
            c.merge_file(p)?;
        }
        for s in &self.sets {
            c.set(s)?;
        }
        if let Some(seed) = self.seed {
            c.set_value("seed", seed)?;
        }
        if let Some(w) = self.workers {
            c.set_value("workers", w)?;
        }
        Ok(c)
    }

    /// `--out`, else `FKNS_OUT`, else `output.dir`.
    pub fn output_root(&self, config: &Config) -> Result<PathBuf> {
        if let Some(p) = &self.out {
            return Ok(p.clone());
        }
        if let Some(p) = std::env::var_os("FKNS_OUT").filter(|p| !p.is_empty()) {
            return Ok(PathBuf::from(p));
        }
        Ok(PathBuf::from(config.str("output.dir")?))
    }
}

#[derive(Debug)]
pub struct Report {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Runs one subcommand in its own worker pool and writes the run folder.
pub fn execute(inv: &Invocation) -> Result<Report> {
    let config = inv.resolve_config()?;
    let root = inv.output_root(&config)?;
    let workers = config.usize("workers")?;
    let seed = config.u64("seed")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building the worker pool")?;
    let mut run = RunDir::create(&root, inv.command.name(), &config)?;
    let mut exp = Experiment::new(config)?;
    let outcome = pool.install(|| commands::run(inv.command, &mut exp, &mut run))?;
    let dir = run.finish(seed, pool.current_num_threads(), &exp.ledger)?;
    Ok(Report { dir, outcome })
}
