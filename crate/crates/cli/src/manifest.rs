use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: Vec<Artifact>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub config: serde_json::Value,
    pub wall_clock_s: f64,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn describe(path: &Path, label: String) -> Result<Artifact> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Artifact { path: label, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Pretty JSON with 2-space indent and sorted keys, newline terminated.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

/// Collects written files into a manifest list.
#[derive(Debug)]
pub struct ArtifactLog {
    root: PathBuf,
    entries: Vec<Artifact>,
}

impl ArtifactLog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), entries: Vec::new() }
    }

    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.entries.push(Artifact {
            path: relative.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        });
        Ok(())
    }

    pub fn into_entries(self) -> Vec<Artifact> {
        self.entries
    }
}

/// Re-reads every listed artifact and compares its hash.
pub fn verify(root: &Path, artifacts: &[Artifact]) -> Result<()> {
    for a in artifacts {
        let found = describe(&root.join(&a.path), a.path.clone())?;
        if found.sha256 != a.sha256 {
            bail!("{} changed after it was written", a.path);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(to_sorted_json(&S { zeta: 1, alpha: 2 }).unwrap(), "{\n  \"alpha\": 2,\n  \"zeta\": 1\n}\n");
    }

    #[test]
    fn verify_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = ArtifactLog::new(dir.path());
        log.write("a/b.txt", b"hello").unwrap();
        let entries = log.into_entries();
        verify(dir.path(), &entries).unwrap();
        fs::write(dir.path().join("a/b.txt"), b"changed").unwrap();
        assert!(verify(dir.path(), &entries).is_err());
    }
}
