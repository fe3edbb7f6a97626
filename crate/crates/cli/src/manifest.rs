//! Output directory handling and the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the canonical configuration, including input file digests.
    pub config_digest: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_seconds: f64,
}

pub fn file_digest(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

/// Collects files written into the output directory.
pub struct Outputs {
    dir: PathBuf,
    command: String,
    digest: String,
    inputs: Vec<String>,
    written: Vec<String>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, config: &serde_json::Value, inputs: &[&Path]) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        // serde_json maps are ordered by key, so this text is canonical.
        let canonical = serde_json::to_string(&serde_json::json!({"command": command, "config": config}))
            .expect("config serialises");
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            digest: hex::encode(Sha256::digest(canonical.as_bytes())),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            written: Vec::new(),
        })
    }

    /// Writes `name` through a temporary file in the output directory.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&Path) -> hofem::Result<()>) -> Result<(), Failure> {
        let target = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        f(&tmp)?;
        std::fs::rename(&tmp, &target).map_err(|e| io_failure(&target, e))?;
        log::info!("wrote {}", target.display());
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<(), Failure> {
        self.write_with(name, |p| Ok(std::fs::write(p, text)?))
    }

    pub fn finish(mut self, started: Instant) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: self.command.clone(),
            config_digest: self.digest.clone(),
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.written.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
        self.write_text("manifest.json", &text)
    }
}
