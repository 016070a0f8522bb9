//! Provenance sidecars written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fsio;

pub const TOOL: &str = "lvvc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    /// Every parameter the output depends on.
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by role.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(command: &str, config: &impl Serialize) -> Metadata {
        let config = serde_json::to_value(config).expect("configuration serialises to JSON");
        Metadata {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            config_sha256: config_hash(&config),
            config,
            inputs: BTreeMap::new(),
        }
    }

    pub fn with_input(mut self, role: &str, bytes: &[u8]) -> Metadata {
        self.inputs.insert(role.to_string(), sha256_hex(bytes));
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON form (object keys sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    sha256_hex(&serde_json::to_vec(config).expect("JSON values always serialise"))
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    output.with_file_name(name)
}

pub fn write_sidecar(output: &Path, meta: &Metadata) -> Result<()> {
    fsio::write_json(&sidecar_path(output), meta)
}
