//! Run manifests and machine-readable error reports written by the CLI.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Diagnostic;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub started_at: String,
    pub wall_time_secs: f64,
    pub config_hash: Option<String>,
    /// Input path to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Output path to content hash.
    pub outputs: BTreeMap<String, String>,
    pub counts: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

/// Collects manifest fields while a command runs.
#[derive(Debug)]
pub struct RunRecorder {
    manifest: RunManifest,
    start: Instant,
}

impl RunRecorder {
    pub fn start(command: &str) -> Self {
        RunRecorder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                wall_time_secs: 0.0,
                config_hash: None,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
                counts: BTreeMap::new(),
                metrics: BTreeMap::new(),
            },
            start: Instant::now(),
        }
    }

    pub fn config_hash(&mut self, hash: String) {
        self.manifest.config_hash = Some(hash);
    }

    pub fn input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let h = sha256_file(path)?;
        self.manifest.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let h = sha256_file(path)?;
        self.manifest.outputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn count(&mut self, key: impl Into<String>, n: u64) {
        self.manifest.counts.insert(key.into(), n);
    }

    pub fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.manifest.metrics.insert(key.into(), value);
    }

    pub fn finish(mut self) -> RunManifest {
        self.manifest.wall_time_secs = self.start.elapsed().as_secs_f64();
        self.manifest
    }
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serialize {
            id: self.command.clone(),
            source: e,
        })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// JSON body printed on failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub command: String,
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ErrorReport {
    pub fn from_error(command: &str, err: &Error) -> Self {
        let kind = match err {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => "not_found",
            Error::Io { .. } => "io",
            Error::LineCountMismatch { .. } => "line_count_mismatch",
            Error::Serialize { .. } => "serialize",
            Error::Json { .. } => "json",
            Error::UnsupportedLanguage { .. } => "unsupported_language",
            Error::Lexicon { .. } => "lexicon",
            Error::Model(_) => "model",
            Error::Diverged { .. } => "diverged",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format { .. } => "format",
            Error::Invariant(_) => "invariant",
            Error::Backend(_) => "backend",
        };
        ErrorReport {
            command: command.to_string(),
            kind: kind.to_string(),
            message: err.to_string(),
            diagnostics: Vec::new(),
        }
    }
}
