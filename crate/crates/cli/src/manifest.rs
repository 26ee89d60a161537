use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::Failure;

/// What a command produced, written next to its artifacts as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: String,
    pub seed: u64,
    pub output_dir: String,
    pub artifacts: Vec<String>,
    pub wall_seconds: f64,
    pub created_unix: u64,
    pub version: String,
}

impl RunManifest {
    pub fn write(
        command: &str,
        config: &str,
        seed: u64,
        dir: &Path,
        artifacts: &[PathBuf],
        started: Instant,
    ) -> Result<PathBuf, Failure> {
        let names = artifacts
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string())
            })
            .collect();
        let manifest = Self {
            command: command.to_string(),
            config: config.to_string(),
            seed,
            output_dir: dir.display().to_string(),
            artifacts: names,
            wall_seconds: started.elapsed().as_secs_f64(),
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(Failure::output)?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| Failure::output(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}
