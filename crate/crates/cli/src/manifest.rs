use crate::config::ExperimentConfig;
use crate::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the configuration with the output directory blanked, so that the
/// same experiment written to different places hashes identically.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = Default::default();
    sha256_hex(serde_json::to_string(&c).expect("config is serializable").as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub files: Vec<FileEntry>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        let mut config = cfg.clone();
        config.output_dir = Default::default();
        Self {
            tool: "slowgait".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            config,
            files: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    /// Writes `bytes` to `dir/name` and records it.
    pub fn write_file(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(dir.join(name), bytes)?;
        self.files.push(FileEntry { name: name.into(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_NAME), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_NAME))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("manifest: {e}")))
    }
}
