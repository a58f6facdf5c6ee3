use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Record of one command invocation. The timestamp is the only field that
/// differs between two runs with the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub created_at: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Collects inputs and outputs of a command and writes its manifest last.
pub struct Run {
    manifest: RunManifest,
    manifest_path: PathBuf,
    base: PathBuf,
}

impl Run {
    /// `manifest_path` also fixes the directory output paths are recorded relative to.
    pub fn new(command: &str, config: serde_json::Value, seed: Option<u64>, manifest_path: PathBuf) -> Self {
        let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                created_at: String::new(),
                seed,
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
            manifest_path,
            base,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = hash_file(path)?;
        self.manifest.inputs.push(Artifact {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.record_output(role, path, sha256_hex(bytes));
        Ok(())
    }

    /// Registers a file some other step already wrote.
    pub fn existing_output(&mut self, role: &str, path: &Path) -> Result<()> {
        let sha256 = hash_file(path)?;
        self.record_output(role, path, sha256);
        Ok(())
    }

    fn record_output(&mut self, role: &str, path: &Path, sha256: String) {
        let shown = path.strip_prefix(&self.base).unwrap_or(path);
        self.manifest.outputs.push(Artifact {
            role: role.to_string(),
            path: shown.display().to_string(),
            sha256,
        });
    }

    pub fn finish(mut self) -> Result<RunManifest> {
        self.manifest.created_at = chrono::Utc::now().to_rfc3339();
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        write_atomic(&self.manifest_path, text.as_bytes())?;
        Ok(self.manifest)
    }
}

/// Manifest location for a single-file output: `F.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
