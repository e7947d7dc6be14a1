use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::{CliError, Result};
use crate::output::{sha256_hex, OutputRecord};

/// Provenance of one CLI run, written next to its outputs.
///
/// Outputs depend only on the config, the seed and the engine versions, never
/// on `workers` or the timestamps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub workers: usize,
    pub engine_versions: BTreeMap<String, String>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<OutputRecord>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    pub fn new(
        command: &str,
        canonical_config: &str,
        master_seed: u64,
        workers: usize,
        started: f64,
    ) -> Self {
        let engine_versions = BTreeMap::from([
            ("fbdg-core".to_string(), fbdg_core::VERSION.to_string()),
            (
                "fbdg-cli".to_string(),
                env!("CARGO_PKG_VERSION").to_string(),
            ),
        ]);
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(canonical_config.as_bytes()),
            master_seed,
            workers,
            engine_versions,
            started_unix_s: started,
            finished_unix_s: started,
            outputs: Vec::new(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Output(e.to_string()))
    }
}
