use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use toml::Table;

/// Record of one command invocation. Its `config` table can be passed back
/// through `--config` to repeat the run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub artifacts: Vec<String>,
    pub results: Table,
    pub config: Table,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn new(command: &str, started_unix: f64, config: Table) -> Self {
        Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.get("seed").and_then(|v| v.as_integer()).map(|s| s as u64),
            started_unix,
            finished_unix: 0.0,
            artifacts: Vec::new(),
            results: Table::new(),
            config,
        }
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn write(mut self, path: &Path) -> Result<PathBuf> {
        self.finished_unix = now_unix();
        let text = toml::to_string_pretty(&self).context("serializing manifest")?;
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(path.to_path_buf())
    }
}

/// `<artifact>.manifest.toml` next to the primary artifact.
pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.toml");
    primary.with_file_name(name)
}
