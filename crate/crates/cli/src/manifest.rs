//! Run-directory manifest: config, input hashes and output hashes per stage.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    /// Role name to SHA-256 of the file read.
    pub inputs: BTreeMap<String, String>,
    /// File name inside the run directory to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// The resolved configuration the run directory was last written with.
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

impl Manifest {
    pub fn new(config: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_hash: crate::config::hash_json(config),
            config: config.clone(),
            stages: BTreeMap::new(),
        }
    }

    /// Load the manifest in `run_dir`, keeping recorded stages, and refresh
    /// the run-level fields from `config`.
    pub fn open(run_dir: &Path, config: &RunConfig) -> Result<Self> {
        let path = run_dir.join(MANIFEST_FILE);
        let mut fresh = Self::new(config);
        if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            match serde_json::from_str::<Manifest>(&text) {
                Ok(old) => fresh.stages = old.stages,
                Err(e) => log::warn!("ignoring unreadable manifest {}: {e}", path.display()),
            }
        }
        Ok(fresh)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(run_dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    /// True when `stage` was recorded with the same config hash and inputs
    /// and every recorded output still has its recorded hash.
    pub fn is_up_to_date(
        &self,
        run_dir: &Path,
        stage: &str,
        config_hash: &str,
        inputs: &BTreeMap<String, String>,
    ) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.config_hash == config_hash
            && &rec.inputs == inputs
            && rec.outputs.iter().all(|(file, hash)| {
                sha256_file(&run_dir.join(file)).is_ok_and(|h| &h == hash)
            })
    }
}
