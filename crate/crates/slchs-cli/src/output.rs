//! CSV and JSON writers. Every file starts with (or embeds) the producing
//! subcommand, the config hash and the seed.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::{CliError, ExperimentConfig};

pub struct RunContext {
    pub subcommand: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub dir: PathBuf,
    pub config: ExperimentConfig,
}

impl RunContext {
    pub fn new(subcommand: &'static str, cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let dir = PathBuf::from(cfg.out.clone().ok_or_else(|| CliError::Config("out: missing".into()))?);
        std::fs::create_dir_all(&dir)?;
        Ok(Self { subcommand, config_hash: cfg.hash(), seed: cfg.seed, dir, config: cfg.portable() })
    }

    fn header(&self) -> String {
        format!("# subcommand={} config_sha256={} seed={}\n", self.subcommand, self.config_hash, self.seed)
    }

    /// Writes `name` as a header comment line followed by CSV records.
    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let mut f = File::create(self.dir.join(name))?;
        f.write_all(self.header().as_bytes())?;
        let mut w = csv::Writer::from_writer(f);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `summary.json` with provenance, the resolved config (minus output
    /// directory and threads) and `results`.
    pub fn write_summary<R: Serialize>(&self, results: &R) -> Result<(), CliError> {
        let doc = serde_json::json!({
            "subcommand": self.subcommand,
            "config_sha256": self.config_hash,
            "seed": self.seed,
            "config": self.config,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(self.dir.join("summary.json"), text + "\n")?;
        Ok(())
    }
}
