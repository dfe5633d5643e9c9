//! `manifest.json`: config hash, tool version and a checksum per output file.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub action: &'static str,
    pub config_sha256: String,
    /// Absent when the action drew no random numbers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub workers: usize,
    pub status: String,
    /// Seconds since the Unix epoch; the only field that differs between reruns.
    pub timestamp: u64,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn new(action: &'static str, config_bytes: &[u8], seed: Option<u64>, workers: usize, status: String) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        Manifest {
            tool: "pdmp",
            version: env!("CARGO_PKG_VERSION"),
            action,
            config_sha256: sha256_hex(config_bytes),
            seed,
            workers,
            status,
            timestamp,
            outputs: Vec::new(),
        }
    }

    pub fn add_outputs(&mut self, dir: &Path, files: &[String]) -> Result<(), CliError> {
        let mut files = files.to_vec();
        files.sort();
        for f in files {
            let bytes = std::fs::read(dir.join(&f)).map_err(io_err(&f))?;
            self.outputs.push(OutputEntry { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), file: f });
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(dir.join(MANIFEST), text + "\n").map_err(io_err(MANIFEST))
    }
}
