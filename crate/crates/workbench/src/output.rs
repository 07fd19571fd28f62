//! Run folders: resolved config, CSV tables, checkpoints, plots and the
//! manifest tying them together.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, Config};
use crate::experiment::SeedLedger;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Shortest round-trip text of a float; `inf`, `-inf` and `NaN` for the
/// non-finite values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StreamEntry {
    pub name: String,
    pub stream: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub seed_ledger: Vec<StreamEntry>,
    pub artifacts: Vec<Artifact>,
}

/// One run folder `<root>/<subcommand>-<config hash prefix>`. Re-running the
/// same config overwrites it.
pub struct RunDir {
    dir: PathBuf,
    subcommand: String,
    config_hash: String,
    artifacts: Vec<String>,
    started: Instant,
}

impl RunDir {
    pub fn create(root: &Path, subcommand: &str, config: &Config) -> Result<Self> {
        let config_hash = config.hash();
        let dir = root.join(format!("{subcommand}-{}", &config_hash[..12]));
        fs::create_dir_all(&dir).with_context(|| format!("creating run folder {}", dir.display()))?;
        let mut run = Self {
            dir,
            subcommand: subcommand.to_string(),
            config_hash,
            artifacts: Vec::new(),
            started: Instant::now(),
        };
        run.write_text("config.resolved", &config.resolved_text())?;
        run.write_text("VERSION", &format!("{CODE_VERSION}\n"))?;
        Ok(run)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Registers a file written by other means (checkpoints).
    pub fn record(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        fs::write(self.path(name), text).with_context(|| format!("writing {name}"))?;
        self.record(name);
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_path(self.path(name)).with_context(|| format!("creating {name}"))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// Writes `manifest.json` with hashes of every recorded artifact.
    pub fn finish(self, seed: u64, workers: usize, ledger: &SeedLedger) -> Result<PathBuf> {
        let mut artifacts = Vec::new();
        for name in &self.artifacts {
            let bytes = fs::read(self.path(name)).with_context(|| format!("hashing {name}"))?;
            artifacts.push(Artifact {
                file: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex(&Sha256::digest(&bytes)),
            });
        }
        let manifest = RunManifest {
            code_version: CODE_VERSION.to_string(),
            subcommand: self.subcommand.clone(),
            config_hash: self.config_hash.clone(),
            seed,
            workers,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            seed_ledger: ledger
                .streams
                .iter()
                .map(|(name, stream)| StreamEntry {
                    name: name.clone(),
                    stream: *stream,
                })
                .collect(),
            artifacts,
        };
        let mut f = fs::File::create(self.path("manifest.json"))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        writeln!(f)?;
        Ok(self.dir)
    }
}
