use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;

use clickstream_core::util::sha256_hex;

pub const FILE: &str = "run.json";

#[derive(Debug, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Complete,
    Failed { stage: String, message: String },
}

/// Machine-readable record of one command invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: &'static str,
    pub inputs: Vec<String>,
    pub seed: u64,
    /// SHA-256 of the compact JSON of `config`.
    pub config_sha256: String,
    pub config: serde_json::Value,
    /// Paths relative to the output directory, excluding this manifest.
    pub outputs: Vec<String>,
    #[serde(flatten)]
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub stage_seconds: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut m = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: Vec::new(),
            seed,
            config_sha256: String::new(),
            config: serde_json::Value::Null,
            outputs: Vec::new(),
            status: Status::Complete,
            wall_time_seconds: None,
            stage_seconds: BTreeMap::new(),
        };
        m.set_config(serde_json::json!({}));
        m
    }

    pub fn set_config(&mut self, config: serde_json::Value) {
        self.config_sha256 = sha256_hex(config.to_string().as_bytes());
        self.config = config;
    }

    pub fn stage(&mut self, name: &str, elapsed: Duration) {
        self.stage_seconds.insert(name.to_string(), elapsed.as_secs_f64());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Forward-slash rendering so manifests read the same on every platform.
pub fn display(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}
