//! Reproducibility manifests and atomic file output.
//!
//! Every run records its fully resolved configuration and the SHA-256 of
//! each artifact it wrote. Feeding the manifest back through `--config`
//! reruns the same configuration.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    /// Flag name -> value, flattened, alphabetical.
    pub config: BTreeMap<String, String>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Collects config and artifacts over the course of one run.
pub struct RunRecorder {
    subcommand: String,
    config: BTreeMap<String, String>,
    artifacts: Vec<Artifact>,
}

impl RunRecorder {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            config: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    /// Write `bytes` to `path` atomically (temp file + rename) and record
    /// its hash.
    pub fn write_artifact(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        write_atomic(path, bytes)?;
        self.artifacts.push(Artifact {
            path: path.display().to_string(),
            sha256: hex_sha256(bytes),
        });
        Ok(())
    }

    /// Record a file this run appended to (hash of the final content).
    pub fn record_existing(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.artifacts.push(Artifact {
            path: path.display().to_string(),
            sha256: hex_sha256(&bytes),
        });
        Ok(())
    }

    /// Finalize: write the manifest itself (atomically).
    pub fn finish(self, explicit: Option<&Path>) -> Result<PathBuf> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => match self.artifacts.first() {
                Some(a) => PathBuf::from(format!("{}.manifest.json", a.path)),
                None => PathBuf::from(format!("fhdnn-{}.manifest.json", self.subcommand)),
            },
        };
        let manifest = Manifest {
            subcommand: self.subcommand,
            config: self.config,
            artifacts: self.artifacts,
        };
        let json = serde_json::to_vec_pretty(&manifest)?;
        write_atomic(&path, &json)?;
        Ok(path)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .context("creating temp file")?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Load a config file: either `key=value` lines (# comments allowed) or a
/// manifest JSON, whose `config` map is used.
pub fn load_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        let manifest: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        return Ok(manifest.config);
    }
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}
