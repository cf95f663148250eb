//! Run manifest: per-stage artifact paths, content hashes, and the config
//! hash each stage ran under. Stages skip only when their config hash,
//! declared inputs, and produced artifacts all verify.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_hash: String,
    /// Artifacts of the stages this one consumed, as they looked at run time.
    pub inputs: Vec<ArtifactEntry>,
    pub artifacts: Vec<ArtifactEntry>,
    pub completed_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub created_at: String,
    /// Snapshot of the config the latest invocation ran with.
    #[serde(default)]
    pub config: serde_json::Value,
    /// Seeds in effect for the latest invocation, by role.
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    pub stages: BTreeMap<String, StageEntry>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hash_bytes(&bytes))
}

/// Stable hash of any serializable config subset.
pub fn hash_config<T: Serialize>(value: &T) -> Result<String> {
    Ok(hash_bytes(serde_json::to_string(value)?.as_bytes()))
}

fn now_iso() -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("unix:{secs}")
}

impl RunManifest {
    pub fn new(run_id: &str) -> Self {
        RunManifest {
            run_id: run_id.to_string(),
            created_at: now_iso(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            stages: BTreeMap::new(),
        }
    }

    pub fn load_or_new(run_dir: &Path, run_id: &str) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        if !path.exists() {
            return Ok(RunManifest::new(run_id));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| {
            Error::ArtifactCorrupt {
                path: path.clone(),
                msg: format!("manifest unreadable: {e}"),
            }
        })?;
        Ok(manifest)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let path = run_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    pub fn record_stage(
        &mut self,
        stage: &str,
        config_hash: String,
        inputs: Vec<ArtifactEntry>,
        run_dir: &Path,
        artifact_paths: &[String],
    ) -> Result<()> {
        let mut artifacts = Vec::with_capacity(artifact_paths.len());
        for rel in artifact_paths {
            artifacts.push(ArtifactEntry {
                path: rel.clone(),
                sha256: hash_file(&run_dir.join(rel))?,
            });
        }
        self.stages.insert(
            stage.to_string(),
            StageEntry {
                config_hash,
                inputs,
                artifacts,
                completed_at: now_iso(),
            },
        );
        Ok(())
    }

    /// A stage entry is valid when its recorded artifacts still exist with
    /// matching hashes.
    pub fn stage_artifacts_valid(&self, stage: &str, run_dir: &Path) -> bool {
        match self.stages.get(stage) {
            None => false,
            Some(entry) => entry.artifacts.iter().all(|a| {
                let path = run_dir.join(&a.path);
                path.exists() && hash_file(&path).map(|h| h == a.sha256).unwrap_or(false)
            }),
        }
    }

    pub fn stage_entry(&self, stage: &str) -> Option<&StageEntry> {
        self.stages.get(stage)
    }
}
