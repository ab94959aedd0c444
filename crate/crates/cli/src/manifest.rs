use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct CommandRecord {
    pub command: String,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

/// Record of every command run against one output directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub fingerprint: String,
    pub version: String,
    pub commands: Vec<CommandRecord>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    /// Load the manifest in `dir`, starting a fresh one if it is missing or
    /// belongs to a different configuration.
    pub fn open(dir: &Path, fingerprint: &str) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if m.fingerprint == fingerprint {
                return Ok(m);
            }
            log::warn!(
                "{} was written for config {}; starting a new manifest for {fingerprint}",
                path.display(),
                m.fingerprint
            );
        }
        Ok(RunManifest {
            fingerprint: fingerprint.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            commands: Vec::new(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
