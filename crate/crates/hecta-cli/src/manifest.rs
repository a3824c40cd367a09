//! Run manifests: every command writes exactly one `manifest.json` into its
//! output directory, recording the argv, the resolved configuration, input
//! hashes, seeds, and produced files. Re-running the recorded command
//! reproduces the outputs byte-for-byte.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Full argv of the invocation.
    pub command: Vec<String>,
    /// Resolved command configuration.
    pub config: serde_json::Value,
    /// SHA-256 of the input scenario file, when one is consumed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_hash: Option<String>,
    pub code_version: String,
    pub seeds: Vec<u64>,
    /// Files produced in the output directory, relative names.
    pub outputs: Vec<String>,
    pub wall_clock_unix: u64,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: std::env::args().collect(),
            config,
            scenario_hash: None,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seeds,
            outputs: Vec::new(),
            wall_clock_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
