use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub da_id: usize,
    pub rt_id: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: String,
    /// SHA-256 over the resolved document, its sidecars and the plan.
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub out_dir: String,
    pub version: String,
    pub cells_total: usize,
    pub cells_completed: Vec<(usize, usize)>,
    pub failures: Vec<FailureRecord>,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn version() -> String {
    match option_env!("GIT_DESCRIBE") {
        Some(d) => d.to_string(),
        None => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// Hex SHA-256 of the parts, each length-prefixed so boundaries count.
pub fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn read(path: &Path) -> Option<RunManifest> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
