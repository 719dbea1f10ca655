//! Run bookkeeping: every artifact-producing command records what it wrote
//! and finishes by dropping a `run.json` next to its outputs. The manifest is
//! written last, so its presence marks a complete run; on error the tracked
//! partial outputs are removed instead.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use mcsep_core::{Error, Result};

use crate::config::Settings;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a Settings,
    inputs: Vec<String>,
    outputs: Vec<String>,
    duration_seconds: f64,
}

/// Collects artifact paths as a command produces them.
pub struct Run {
    command: &'static str,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &'static str) -> Run {
        Run { command, started: Instant::now(), inputs: Vec::new(), outputs: Vec::new() }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Creates `dir` (and parents) and remembers nothing: directories are
    /// kept on failure, only files are rolled back.
    pub fn ensure_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
    }

    pub fn write_file(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        fs::write(path, bytes.as_ref()).map_err(|e| Error::io(path, e))?;
        self.output(path);
        Ok(())
    }

    /// Writes the manifest next to the outputs and returns its path.
    pub fn finish(mut self, settings: &Settings, manifest_path: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: settings.seed,
            config: settings,
            inputs: self.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: self.outputs.iter().map(|p| p.display().to_string()).collect(),
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Format(format!("run manifest: {e}")))?;
        fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
        self.outputs.clear(); // success: nothing left to roll back
        Ok(manifest_path.to_path_buf())
    }

    /// Removes everything written so far (best effort, errors ignored).
    pub fn discard(&self) {
        for path in &self.outputs {
            let _ = fs::remove_file(path);
        }
    }
}
