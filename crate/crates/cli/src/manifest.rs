//! Run manifests and output-directory handling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use dbvar_core::fingerprint::sha256_hex;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What a run produced. Everything except `timings_secs` is a pure function
/// of the config and tool version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub experiment: String,
    pub config_fingerprint: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub timings_secs: Vec<(String, f64)>,
    /// Free-form deterministic facts a command wants on record
    /// (e.g. label-noise indices).
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

/// Creates the output directory. An existing non-empty directory is refused
/// unless `overwrite` is set, in which case it is removed first.
pub fn prepare_out_dir(out: &Path, overwrite: bool) -> Result<(), CliError> {
    if out.exists() {
        let non_empty = fs::read_dir(out)
            .map_err(CliError::from)?
            .next()
            .is_some();
        if non_empty {
            if !overwrite {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty; pass --overwrite to replace it",
                    out.display()
                )));
            }
            fs::remove_dir_all(out)?;
        }
    }
    fs::create_dir_all(out)?;
    Ok(())
}

/// Collects artifacts and timings while a command runs, then writes the
/// manifest atomically.
pub struct RunContext {
    out: PathBuf,
    experiment: String,
    config_fingerprint: String,
    artifacts: Vec<ArtifactEntry>,
    timings: Vec<(String, f64)>,
    extra: serde_json::Value,
}

impl RunContext {
    pub fn new(out: &Path, experiment: &str, config_fingerprint: String) -> Self {
        RunContext {
            out: out.to_path_buf(),
            experiment: experiment.to_string(),
            config_fingerprint,
            artifacts: Vec::new(),
            timings: Vec::new(),
            extra: serde_json::Value::Null,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    /// Writes `contents` under the output directory and records its digest.
    pub fn write_artifact(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.artifacts.push(ArtifactEntry {
            file: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    /// Digests an already-written file under the output directory.
    pub fn record_file(&mut self, rel: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.out.join(rel))?;
        self.artifacts.push(ArtifactEntry {
            file: rel.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Records every file under `rel_dir` (sorted) as artifacts; used for
    /// directories written by library persistence helpers.
    pub fn record_dir(&mut self, rel_dir: &str) -> Result<(), CliError> {
        let dir = self.out.join(rel_dir);
        let mut names: Vec<String> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        for name in names {
            let bytes = fs::read(dir.join(&name))?;
            self.artifacts.push(ArtifactEntry {
                file: format!("{rel_dir}/{name}"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        Ok(())
    }

    pub fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let value = f();
        self.timings
            .push((label.to_string(), start.elapsed().as_secs_f64()));
        value
    }

    pub fn set_extra(&mut self, extra: serde_json::Value) {
        self.extra = extra;
    }

    /// Writes `manifest.json` via a temp file + rename.
    pub fn finish(self) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: self.experiment,
            config_fingerprint: self.config_fingerprint,
            artifacts: self.artifacts,
            timings_secs: self.timings,
            extra: self.extra,
        };
        let body = serde_json::to_string_pretty(&manifest).map_err(|e| {
            CliError::Run(anyhow::anyhow!("manifest serialization failed: {e}"))
        })?;
        let tmp = self.out.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, self.out.join(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

pub fn load_manifest(out: &Path) -> Result<RunManifest, CliError> {
    let body = fs::read_to_string(out.join(MANIFEST_FILE))?;
    serde_json::from_str(&body).map_err(|e| CliError::Run(anyhow::anyhow!("bad manifest: {e}")))
}
