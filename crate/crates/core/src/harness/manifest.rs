//! Run manifests: what ran, with which inputs, and digests of what it wrote.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunMode;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSeeds {
    pub split: u64,
    pub generation: u64,
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub run_mode: RunMode,
    pub seeds: ManifestSeeds,
    pub completed: bool,
    pub stages: Vec<StageRecord>,
    /// Input files by role.
    pub inputs: BTreeMap<String, String>,
    /// Output files relative to the run directory.
    pub artifacts: BTreeMap<String, String>,
}

/// Hex SHA-256 of a file.
pub fn file_digest(path: &Path) -> Result<String, HarnessError> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    /// Everything except timings and stage details: equal for reproduced runs.
    pub fn fingerprint(&self) -> (&str, &BTreeMap<String, String>, &BTreeMap<String, String>) {
        (&self.config_sha256, &self.inputs, &self.artifacts)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub(crate) fn record(
        &mut self,
        stage: &str,
        status: StageStatus,
        started: Instant,
        detail: Option<String>,
    ) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            status,
            seconds: started.elapsed().as_secs_f64(),
            detail,
        });
    }

    /// Digests `rel` under `dir` into `artifacts`.
    pub(crate) fn add_artifact(&mut self, dir: &Path, rel: &str) -> Result<(), HarnessError> {
        let digest = file_digest(&dir.join(rel))?;
        self.artifacts.insert(rel.to_string(), digest);
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}
