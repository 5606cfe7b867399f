use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use sixbq::{Error, Result};

use super::config::RunConfig;

pub const SCHEMA_VERSION: &str = "1.0";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical TOML rendering of the resolved configuration.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    Ok(sha256_hex(text.as_bytes()))
}

/// One output directory: report, CSV series, timings and a manifest.
pub struct RunDir {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    timings: BTreeMap<String, f64>,
}

impl RunDir {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(RunDir {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            timings: BTreeMap::new(),
        })
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}"))).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &bytes)
    }

    pub fn time(&mut self, phase: &str, seconds: f64) {
        self.timings.insert(phase.to_string(), seconds);
    }

    /// Writes `timings.json` (not hashed) and `manifest.json`.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, exit_code: i32) -> Result<PathBuf> {
        let timings = serde_json::to_string_pretty(&self.timings).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(self.dir.join("timings.json"), timings + "\n")?;
        let manifest = json!({
            "schema_version": SCHEMA_VERSION,
            "tool": { "name": "sixbq", "version": env!("CARGO_PKG_VERSION") },
            "command": command,
            "exit_code": exit_code,
            "config_sha256": config_hash(cfg)?,
            "config": cfg,
            "files": self.files,
            "unhashed": ["timings.json"],
        });
        let name = "manifest.json";
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        text.push('\n');
        std::fs::write(self.dir.join(name), text)?;
        self.files.clear();
        Ok(self.dir)
    }
}
