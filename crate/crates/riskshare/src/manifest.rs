//! Run manifests: a JSON record of what a CLI invocation read, wrote, and
//! when, with content checksums so a rerun can be audited byte-for-byte.
//!
//! Timestamps live only here — every other output is a pure function of the
//! inputs and the seed, so reruns are byte-identical except for this file's
//! clock fields.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::Read;
use std::path::{Path, PathBuf};

/// SHA-256 digest of one file, hex-encoded, with its size in bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Computes the digest of a file by streaming its contents.
pub fn digest_file(path: impl AsRef<Path>) -> Result<FileDigest> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex_string(&hasher.finalize()),
        bytes,
    })
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn rfc3339_now() -> String {
    chrono::Utc::now()
        .to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

/// Record of one CLI run: the command tag, its configuration inputs, the
/// seed, and a checksum for every file the run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_paths: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub out_dir: String,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: Option<String>,
}

impl RunManifest {
    /// Starts a manifest, digesting the configuration inputs up front.
    pub fn start(
        command: &str,
        seed: Option<u64>,
        config_paths: &[PathBuf],
        out_dir: impl AsRef<Path>,
    ) -> Result<Self> {
        let inputs = config_paths
            .iter()
            .map(digest_file)
            .collect::<Result<Vec<_>>>()?;
        Ok(RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_paths: config_paths
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            inputs,
            out_dir: out_dir.as_ref().display().to_string(),
            outputs: Vec::new(),
            started_at: rfc3339_now(),
            finished_at: None,
        })
    }

    /// Registers a produced file, checksumming its final contents.
    pub fn record_output(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.outputs.push(digest_file(path)?);
        Ok(())
    }

    /// Stamps the end time and writes `manifest.json` into the output
    /// directory. The manifest itself is the one file not listed in
    /// `outputs` (it cannot contain its own checksum).
    pub fn finish(mut self) -> Result<PathBuf> {
        self.finished_at = Some(rfc3339_now());
        let path = Path::new(&self.out_dir).join("manifest.json");
        let json = serde_json::to_string_pretty(&self)
            .map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, json)?;
        Ok(path)
    }
}
