//! Versioned, checksummed binary envelope used for every persisted model.
//!
//! Layout: 8-byte magic, u32 LE format version, 32-byte SHA-256 of the body,
//! then the bincode-encoded body.

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

const HEADER_LEN: usize = 8 + 4 + 32;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact too short ({0} bytes)")]
    Truncated(usize),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: [u8; 8] },
    #[error("unsupported artifact version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch: artifact is corrupt")]
    Checksum,
    #[error("encoding error: {0}")]
    Encoding(#[from] bincode::Error),
}

pub fn encode<T: Serialize>(magic: &[u8; 8], version: u32, value: &T) -> Result<Vec<u8>, ArtifactError> {
    let body = bincode::serialize(value)?;
    let digest = Sha256::digest(&body);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&digest);
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(magic: &[u8; 8], version: u32, bytes: &[u8]) -> Result<T, ArtifactError> {
    if bytes.len() < HEADER_LEN {
        return Err(ArtifactError::Truncated(bytes.len()));
    }
    if &bytes[..8] != magic {
        return Err(ArtifactError::BadMagic { expected: *magic });
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if found != version {
        return Err(ArtifactError::Version { found, expected: version });
    }
    let body = &bytes[HEADER_LEN..];
    if Sha256::digest(body).as_slice() != &bytes[12..HEADER_LEN] {
        return Err(ArtifactError::Checksum);
    }
    Ok(bincode::deserialize(body)?)
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
