//! Versioned, checksummed chain snapshots.
//!
//! A blob is one header line `tntm-snapshot v<version> <sha256 of payload>`
//! followed by the JSON payload.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tntm_core::corpus::Corpus;
use tntm_core::engine::ChainState;
use tntm_core::eval::EvalOptions;
use tntm_core::tn::TnConfig;

pub const MAGIC: &str = "tntm-snapshot";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("not a snapshot")]
    NotASnapshot,
    #[error("format version {found} is not supported (expected {VERSION})")]
    Version { found: String },
    #[error("checksum mismatch; the blob is truncated or corrupted")]
    Checksum,
    #[error("payload does not decode: {0}")]
    Decode(String),
}

/// Everything `eval`, `label` and `recommend` need from a finished run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub variant: String,
    pub seed: u64,
    pub config: TnConfig,
    pub eval: EvalOptions,
    pub chain: ChainState,
    pub train: Corpus,
    pub test: Option<Corpus>,
    /// Reference labels of the training documents.
    pub labels: Option<Vec<u32>>,
}

pub fn encode(snapshot: &Snapshot) -> Vec<u8> {
    let payload = serde_json::to_vec(snapshot).expect("snapshot serializes");
    let sum = hex::encode(Sha256::digest(&payload));
    let mut out = format!("{MAGIC} v{VERSION} {sum}\n").into_bytes();
    out.extend_from_slice(&payload);
    out
}

pub fn decode(blob: &[u8]) -> Result<Snapshot, SnapshotError> {
    let split = blob.iter().position(|&b| b == b'\n').ok_or(SnapshotError::NotASnapshot)?;
    let header = std::str::from_utf8(&blob[..split]).map_err(|_| SnapshotError::NotASnapshot)?;
    let payload = &blob[split + 1..];
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(SnapshotError::NotASnapshot);
    }
    let version = parts.next().ok_or(SnapshotError::NotASnapshot)?;
    if version != format!("v{VERSION}") {
        return Err(SnapshotError::Version {
            found: version.trim_start_matches('v').to_string(),
        });
    }
    let sum = parts.next().ok_or(SnapshotError::NotASnapshot)?;
    if hex::encode(Sha256::digest(payload)) != sum {
        return Err(SnapshotError::Checksum);
    }
    serde_json::from_slice(payload).map_err(|e| SnapshotError::Decode(e.to_string()))
}
