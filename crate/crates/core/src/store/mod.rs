//! File-backed persistence: append-only event log, materialised review state,
//! model artifact registry and run registry.

mod log;
mod registry;
mod state;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use log::{EventKind, EventLog, EventPayload, EventRecord};
pub use registry::{ModelRegistry, RunRecord, RunRegistry, WorkUnit};
pub use state::{AlertScores, AlertState, StoreState, TransitionError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("storage full: {0}")]
    Full(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("corrupt log at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("snapshot at {as_of} is past the head of the log ({head})")]
    PastHead { as_of: u64, head: u64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Transition(#[from] TransitionError),
    #[error("artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },
    #[error("schema fingerprint mismatch: artifact has {found}, expected {expected}")]
    Fingerprint { found: String, expected: String },
    #[error("run conflict: {0}")]
    Conflict(String),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl StoreError {
    pub(crate) fn from_io(e: io::Error) -> Self {
        // ENOSPC / EDQUOT
        match e.raw_os_error() {
            Some(28) | Some(122) => StoreError::Full(e.to_string()),
            _ => StoreError::Io(e),
        }
    }
}

/// Writes `bytes` to a sibling temp file, syncs it and renames it over `path`.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<(), StoreError> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(StoreError::from_io)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(StoreError::from_io)?;
        f.write_all(bytes).map_err(StoreError::from_io)?;
        f.sync_all().map_err(StoreError::from_io)?;
    }
    std::fs::rename(&tmp, path).map_err(StoreError::from_io)?;
    Ok(())
}
