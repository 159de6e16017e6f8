use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    /// Records the absolute path, so the manifest stays valid from any directory.
    pub fn of(path: &Path) -> Result<Self> {
        let abs = std::fs::canonicalize(path)
            .with_context(|| format!("cannot resolve {}", path.display()))?;
        Ok(FileDigest {
            sha256: sha256_file(&abs)?,
            path: abs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = reader
            .read(&mut buf)
            .with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(
        command: &str,
        seed: u64,
        threads: Option<usize>,
        config: BTreeMap<String, String>,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            threads,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: unix_now(),
            finished_at: 0,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        self.finished_at = unix_now();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }

    /// Reads a manifest and re-hashes every recorded file, failing on any mismatch.
    pub fn load_verified(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .with_context(|| format!("malformed manifest {}", path.display()))?;
        manifest.verify()?;
        Ok(manifest)
    }

    pub fn verify(&self) -> Result<()> {
        for d in self.inputs.iter().chain(&self.outputs) {
            let now = sha256_file(&d.path)?;
            if now != d.sha256 {
                bail!(
                    "digest mismatch for {}: manifest has {}, file has {now}",
                    d.path.display(),
                    d.sha256
                );
            }
        }
        Ok(())
    }
}
