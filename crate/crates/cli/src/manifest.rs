//! Sidecar manifests recording how an artifact was produced.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    /// Where the seed came from: `flag`, `env`, `config` or `default`.
    pub seed_source: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Command-specific options needed to repeat the run.
    #[serde(default)]
    pub options: serde_json::Value,
    pub started_at: String,
    pub finished_at: String,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    Ok(FileDigest { path: path.display().to_string(), sha256: sha256_file(path)? })
}

/// `<artifact>.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl ExperimentManifest {
    pub fn write(&self, artifact: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(artifact);
        let text = serde_json::to_string_pretty(self).expect("manifests serialize");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Parse { path: e.path().to_string(), message: e.inner().to_string() })
    }

    /// Inputs whose current digest differs from the recorded one.
    pub fn stale_inputs(&self) -> Result<Vec<String>, CliError> {
        let mut stale = Vec::new();
        for d in &self.inputs {
            if sha256_file(Path::new(&d.path))? != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        Ok(stale)
    }
}
