//! One JSON manifest per command run.
//!
//! `content_hash` covers everything except the timestamps, so two runs with
//! the same inputs and configuration agree on it. Timestamps honor
//! `SOURCE_DATE_EPOCH`; with it set, whole manifests are byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::archive::write_atomic;
use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub started_at: u64,
    pub finished_at: u64,
    /// Path to SHA-256 of the file contents.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub content_hash: String,
}

fn now() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_path(path: &Path) -> AppResult<String> {
    if path.is_dir() {
        // directories hash as the sorted list of their files and hashes
        let mut entries: Vec<_> = fs::read_dir(path)
            .map_err(|e| AppError::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        let mut listing = String::new();
        for p in entries {
            let name = p.file_name().unwrap_or_default().to_string_lossy().to_string();
            listing.push_str(&format!("{name} {}\n", hash_path(&p)?));
        }
        return Ok(sha256_hex(listing.as_bytes()));
    }
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn start(command: &str, config: Value, seed: Option<u64>) -> Self {
        RunManifest {
            tool: "lgcnn".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            seed,
            started_at: now(),
            finished_at: 0,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            content_hash: String::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> AppResult<()> {
        self.inputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> AppResult<()> {
        self.outputs.insert(path.display().to_string(), hash_path(path)?);
        Ok(())
    }

    /// Hash of the named stdout stream, recorded as an output.
    pub fn stdout(&mut self, text: &str) {
        self.outputs.insert("<stdout>".into(), sha256_hex(text.as_bytes()));
    }

    pub fn finish(&mut self) {
        self.finished_at = now();
        let body = serde_json::json!({
            "tool": self.tool,
            "version": self.version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        self.content_hash = sha256_hex(body.to_string().as_bytes());
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Writes to `path`, or to stderr when there is no output file to sit
    /// beside.
    pub fn emit(&mut self, path: Option<&Path>) -> AppResult<()> {
        self.finish();
        match path {
            Some(p) => write_atomic(p, self.to_json().as_bytes()),
            None => {
                eprint!("{}", self.to_json());
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_hash_ignores_timestamps() {
        let mut a = RunManifest::start("audit", serde_json::json!({"model": "x"}), Some(1));
        let mut b = a.clone();
        b.started_at += 100;
        a.finish();
        b.finish();
        assert_eq!(a.content_hash, b.content_hash);
        let mut c = RunManifest::start("audit", serde_json::json!({"model": "y"}), Some(1));
        c.finish();
        assert_ne!(a.content_hash, c.content_hash);
    }

    #[test]
    fn directory_hash_tracks_contents() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a"), "1").unwrap();
        let h1 = hash_path(dir.path()).unwrap();
        fs::write(dir.path().join("a"), "2").unwrap();
        assert_ne!(h1, hash_path(dir.path()).unwrap());
    }
}
