//! Run manifest: a JSON record written next to every run's artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rflnn_core::{Error, Result};

/// Everything needed to audit or reproduce a run. `created` is the only
/// field that differs between reruns of an identical config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    /// SHA-256 of the config file bytes.
    pub config_sha256: String,
    pub crate_version: String,
    /// RFC 3339 start time of the run.
    pub created: String,
    pub jobs: usize,
    pub seeds: Vec<u64>,
    /// Files written into the run directory (manifest included).
    pub artifacts: Vec<String>,
    /// "complete" or "partial" (a runtime failure interrupted the run).
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Hex SHA-256 of the config text.
pub fn config_hash(text: &str) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    let digest = h.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Numeric(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), body + "\n")?;
    Ok(())
}
