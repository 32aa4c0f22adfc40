//! `manifest.json`: every artifact written under an output directory, with
//! its checksum and the hash of the configuration that produced it.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rankcorrect::data::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// Hash of the preprocessing config of the dataset in this directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_config_hash: Option<String>,
    pub artifacts: BTreeMap<String, Artifact>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub command: String,
    pub config_hash: String,
    pub sha256: String,
    pub bytes: u64,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn record(&mut self, dir: &Path, name: &str, command: &str, config_hash: &str) -> Result<()> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                command: command.to_string(),
                config_hash: config_hash.to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
