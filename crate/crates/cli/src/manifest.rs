use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use modal_stream::io::atomic_write;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub reference: String,
    /// Median per-mode MAC of the configured method, in reference order.
    pub median_mac: Vec<f64>,
    pub median_batch_mac: Vec<f64>,
    pub median_baseline_mac: Option<Vec<f64>>,
    pub median_recursive_vs_batch: Option<Vec<f64>>,
    pub identified_freqs_hz: Vec<f64>,
    pub reference_freqs_hz: Vec<f64>,
    pub failed_samples: usize,
}

/// State needed to resume the first member's pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub member: usize,
    pub sample: u64,
    pub eigenspace_hex: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub status: RunStatus,
    pub case: String,
    pub fixture: String,
    pub seed: u64,
    /// SHA-256 of the fixture name and the effective configuration.
    pub input_hash: String,
    pub config: BTreeMap<String, String>,
    pub ensemble_size: usize,
    pub error: Option<String>,
    pub summary: Option<Summary>,
    pub snapshot: Option<Snapshot>,
    /// Seconds per stage, present only when requested.
    pub timings: Option<BTreeMap<String, f64>>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, String> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn store(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        atomic_write(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
