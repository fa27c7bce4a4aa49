use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::error::CliResult;
use crate::io::write_json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Warning,
    Failed,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub status: Status,
    pub diagnostics: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<Value>,
}

/// Collects what a run read and wrote; written once at the end.
pub struct Recorder {
    manifest: RunManifest,
    clock: Instant,
    out_dir: PathBuf,
}

impl Recorder {
    pub fn new(command: &str, config: Value, seed: u64, out_dir: &Path) -> Self {
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION"),
                config,
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
                started_unix,
                wall_seconds: 0.0,
                status: Status::Ok,
                diagnostics: Value::Null,
                error: None,
            },
            clock: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    /// Path inside the output directory, recorded as an output.
    pub fn output(&mut self, name: &str) -> PathBuf {
        let p = self.out_dir.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    pub fn warn(&mut self) {
        self.manifest.status = Status::Warning;
    }

    pub fn summary(&self) -> &Value {
        &self.manifest.diagnostics
    }

    pub fn diagnostics(&mut self, value: Value) {
        self.manifest.diagnostics = value;
    }

    pub fn fail(&mut self, error: Value) {
        self.manifest.status = Status::Failed;
        self.manifest.error = Some(error);
    }

    pub fn finish(mut self) -> CliResult<Status> {
        self.manifest.wall_seconds = self.clock.elapsed().as_secs_f64();
        std::fs::create_dir_all(&self.out_dir)?;
        write_json(&self.out_dir.join("manifest.json"), &self.manifest)?;
        Ok(self.manifest.status)
    }
}
