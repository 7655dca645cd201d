//! Reproducibility manifest: a frozen config snapshot, seed fan-out, and
//! an append-only event log tying every artifact on disk to the run that
//! produced it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_bytes(&std::fs::read(path)?))
}

/// One master seed fans out deterministically to the per-stage seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFanout {
    pub master: u64,
    pub split: u64,
    pub mock: u64,
    pub identifier: u64,
    pub categorizer: u64,
}

impl SeedFanout {
    pub fn from_master(master: u64) -> Self {
        use rand::RngCore;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(master);
        SeedFanout {
            master,
            split: rng.next_u64(),
            mock: rng.next_u64(),
            identifier: rng.next_u64(),
            categorizer: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEvent {
    pub stage: String,
    /// "completed" or "failed"; a stage that started but never appended a
    /// completion is implicitly incomplete.
    pub status: String,
    pub unix_time_s: u64,
    /// Input name -> content fingerprint.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Output path -> content fingerprint.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub details: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub created_unix_time_s: u64,
    pub seeds: SeedFanout,
    /// Effective configuration after flag overrides, frozen at run start.
    pub config: serde_json::Value,
    pub events: Vec<StageEvent>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(config: serde_json::Value, master_seed: u64) -> Self {
        RunManifest {
            schema_version: 1,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_time_s: now_unix(),
            seeds: SeedFanout::from_master(master_seed),
            config,
            events: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> std::io::Result<RunManifest> {
        let content = std::fs::read_to_string(path)?;
        serde_json::from_str(&content)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).expect("manifest serializes") + "\n",
        )
    }

    /// Append an event; existing events are never rewritten.
    pub fn record(
        &mut self,
        stage: &str,
        status: &str,
        inputs: BTreeMap<String, String>,
        outputs: BTreeMap<String, String>,
        details: serde_json::Value,
    ) {
        self.events.push(StageEvent {
            stage: stage.to_string(),
            status: status.to_string(),
            unix_time_s: now_unix(),
            inputs,
            outputs,
            details,
        });
    }

    pub fn completed(&self, stage: &str) -> Option<&StageEvent> {
        self.events
            .iter()
            .rev()
            .find(|e| e.stage == stage && e.status == "completed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_fanout_is_deterministic_and_distinct() {
        let a = SeedFanout::from_master(42);
        let b = SeedFanout::from_master(42);
        assert_eq!(a, b);
        let seeds = [a.split, a.mock, a.identifier, a.categorizer];
        let mut unique = seeds.to_vec();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_ne!(SeedFanout::from_master(43).split, a.split);
    }

    #[test]
    fn manifest_roundtrip_and_append_only_events() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let mut manifest = RunManifest::new(serde_json::json!({"seed": 1}), 1);
        manifest.record(
            "ingest",
            "completed",
            BTreeMap::from([("dataset".to_string(), "abc".to_string())]),
            BTreeMap::new(),
            serde_json::json!({"rows": 10}),
        );
        manifest.save(&path).unwrap();

        let mut loaded = RunManifest::load(&path).unwrap();
        assert_eq!(loaded, manifest);
        loaded.record("split", "failed", BTreeMap::new(), BTreeMap::new(), serde_json::Value::Null);
        assert_eq!(loaded.events.len(), 2);
        assert_eq!(loaded.events[0].stage, "ingest");
        assert!(loaded.completed("split").is_none());
        assert!(loaded.completed("ingest").is_some());
    }

    #[test]
    fn fingerprints_are_stable() {
        assert_eq!(
            sha256_bytes(b"satd"),
            "3ebabf79f2764401713d9ba4fb085dd659cc92d9f0440f8921ff06e11e46afa1"
        );
    }
}
