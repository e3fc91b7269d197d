use crate::config::Config;
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record written into every artifact directory. Re-running the
/// command with `config` against inputs matching `inputs` reproduces the
/// outputs bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Config,
    pub seed: u64,
    pub versions: Versions,
    pub inputs: Vec<InputDigest>,
    pub started_unix: u64,
    pub elapsed_secs: f64,
    /// Free-form facts about the run, e.g. whether GHS mode was used.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub mghs: String,
    pub rng: String,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            mghs: env!("CARGO_PKG_VERSION").to_string(),
            rng: "ChaCha8, stream 2c (chain) / 2c+1 (selection)".to_string(),
        }
    }
}

pub fn digest(path: &Path) -> Result<InputDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        bytes: bytes.len() as u64,
    })
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
