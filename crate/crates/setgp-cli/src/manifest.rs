//! Run manifest written alongside every output directory; records enough
//! to reproduce the run exactly.

use std::path::{Path, PathBuf};

use serde::Serialize;
use setgp::Result;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub library_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: u64,
    started: std::time::Instant,
    outputs: Vec<String>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            started: std::time::Instant::now(),
            outputs: Vec::new(),
        }
    }

    /// Writes `bytes` under the output directory and records the path.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(path)
    }

    pub fn finish(self, dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&manifest)
            .expect("manifest serialization cannot fail");
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }
}
