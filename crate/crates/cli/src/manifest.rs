use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Record of one run, written as `manifest.json` next to the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub config_digest: String,
    /// The run document verbatim, so the manifest alone replays the run.
    pub config_text: String,
    pub seed: u64,
    pub tool_version: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started: String,
    pub finished: String,
    pub pass: bool,
    /// Command-specific results.
    pub summary: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl ExperimentManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Checks that the recorded inputs are still the files that were used.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        for input in &self.inputs {
            let now = digest_file(&input.path)?;
            if now.sha256 != input.sha256 {
                return Err(CliError::Usage(format!("input {} changed since the recorded run", input.path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
