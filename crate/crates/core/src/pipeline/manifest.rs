//! Run manifest: which files each stage read and wrote, with hashes, so
//! that every input can be traced to a prior stage or a declared external
//! file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{read_json, sha256_file, write_json};
use super::PipelineError;

/// File name of the manifest inside the work directory.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the work directory when inside it, absolute otherwise.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Path of the configuration document, if the run was loaded from one.
    pub config_path: Option<PathBuf>,
    /// SHA-256 of the effective configuration serialized as JSON.
    pub config_hash: String,
    pub external_inputs: Vec<FileRecord>,
    /// Stage runs in execution order; a rerun replaces the earlier record
    /// and moves to the end.
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String, config_path: Option<PathBuf>) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path,
            config_hash,
            external_inputs: Vec::new(),
            stages: Vec::new(),
        }
    }

    /// Loads the manifest of `workdir`, or starts a fresh one. A manifest
    /// written under a different configuration is discarded.
    pub fn load_or_new(workdir: &Path, config_hash: &str, config_path: Option<PathBuf>) -> Result<Self, PipelineError> {
        let path = workdir.join(MANIFEST_FILE);
        if path.exists() {
            let m: Self = read_json(&path)?;
            if m.config_hash == config_hash {
                return Ok(m);
            }
            log::warn!("configuration changed; starting a new manifest in {}", workdir.display());
        }
        Ok(Self::new(config_hash.to_string(), config_path))
    }

    pub fn save(&self, workdir: &Path) -> Result<(), PipelineError> {
        write_json(&workdir.join(MANIFEST_FILE), self)
    }

    /// Hashes `files` and records them relative to `workdir`.
    pub fn records(workdir: &Path, files: &[PathBuf]) -> Result<Vec<FileRecord>, PipelineError> {
        files
            .iter()
            .map(|f| {
                let path = f.strip_prefix(workdir).map(Path::to_path_buf).unwrap_or_else(|_| f.clone());
                Ok(FileRecord { path, sha256: sha256_file(f)? })
            })
            .collect()
    }

    pub fn declare_external(&mut self, rec: FileRecord) {
        self.external_inputs.retain(|r| r.path != rec.path);
        self.external_inputs.push(rec);
    }

    pub fn record_stage(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.stage != rec.stage);
        self.stages.push(rec);
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// Absolute path of a recorded file.
    pub fn resolve(workdir: &Path, rec: &FileRecord) -> PathBuf {
        if rec.path.is_absolute() {
            rec.path.clone()
        } else {
            workdir.join(&rec.path)
        }
    }

    /// Checks that every stage input, with its hash, was written by an
    /// earlier stage or declared external.
    pub fn check_closure(&self) -> Result<(), PipelineError> {
        for (t, s) in self.stages.iter().enumerate() {
            for input in &s.inputs {
                let produced = self.stages[..t].iter().any(|p| p.outputs.contains(input));
                if !produced && !self.external_inputs.contains(input) {
                    return Err(PipelineError::Manifest(format!(
                        "stage `{}` read {} ({}), which no earlier stage wrote and is not a declared input",
                        s.stage,
                        input.path.display(),
                        &input.sha256[..12.min(input.sha256.len())]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that the files recorded as outputs still have their hashes.
    pub fn check_outputs(&self, workdir: &Path, stage: &str) -> Result<(), PipelineError> {
        let s = self.stage(stage).ok_or_else(|| PipelineError::Manifest(format!("stage `{stage}` has not run")))?;
        for out in &s.outputs {
            let now = sha256_file(&Self::resolve(workdir, out))?;
            if now != out.sha256 {
                return Err(PipelineError::Manifest(format!("{} changed since stage `{stage}` wrote it", out.path.display())));
            }
        }
        Ok(())
    }
}
