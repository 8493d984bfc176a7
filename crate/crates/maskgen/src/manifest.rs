use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: Option<u64>,
}

/// Provenance of one command or pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// Input name → content hash.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub tool_version: String,
    pub timestamps: Timestamps,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            inputs: BTreeMap::new(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
            timestamps: Timestamps {
                started: now(),
                finished: None,
            },
        }
    }

    pub fn input(mut self, name: impl Into<String>, hash: impl Into<String>) -> Self {
        self.inputs.insert(name.into(), hash.into());
        self
    }

    pub fn finish(&mut self) {
        self.timestamps.finished = Some(now());
    }

    /// Hash of everything except the timestamps, so reruns with identical
    /// inputs produce identical artifacts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut field = |s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        field(&self.command);
        field(&self.config_hash);
        for (k, v) in &self.inputs {
            field(k);
            field(v);
        }
        field(&self.seed.to_string());
        field(&self.tool_version);
        hex::encode(h.finalize())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut v = serde_json::to_value(self)?;
        v["hash"] = serde_json::Value::String(self.hash());
        std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
        Ok(())
    }
}

/// Hex SHA-256 of a byte string.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 over length-prefixed parts.
pub fn combine_hashes<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timestamps() {
        let a = RunManifest::new("train", "abc", 3).input("data", "d1");
        let mut b = a.clone();
        b.timestamps.started += 1000;
        b.finish();
        assert_eq!(a.hash(), b.hash());
        let c = a.clone().input("codebook", "c1");
        assert_ne!(a.hash(), c.hash());
        let mut d = a.clone();
        d.seed = 4;
        assert_ne!(a.hash(), d.hash());
    }

    #[test]
    fn combine_is_boundary_sensitive() {
        assert_ne!(combine_hashes(["ab", "c"]), combine_hashes(["a", "bc"]));
    }
}
