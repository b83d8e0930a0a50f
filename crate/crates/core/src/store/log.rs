//! Append-only event log. Each record is framed as
//! `[u32 LE body length][u32 LE CRC-32 of body][JSON body]`.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::state::{AlertScores, StoreState};
use super::StoreError;
use crate::domain::{Alert, Decision, OutcomeCode};

const FRAME_HEADER: usize = 8;
const MAX_NOTE_CHARS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    AlertCreated,
    DecisionRecorded,
    OutcomeRecorded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventPayload {
    AlertCreated { alert: Alert, scores: Option<AlertScores> },
    DecisionRecorded { alert_id: String, decision: Decision, note: Option<String> },
    OutcomeRecorded { alert_id: String, outcome_code: OutcomeCode, resolved_at: DateTime<Utc> },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::AlertCreated { .. } => EventKind::AlertCreated,
            EventPayload::DecisionRecorded { .. } => EventKind::DecisionRecorded,
            EventPayload::OutcomeRecorded { .. } => EventKind::OutcomeRecorded,
        }
    }

    pub fn alert_id(&self) -> &str {
        match self {
            EventPayload::AlertCreated { alert, .. } => &alert.id,
            EventPayload::DecisionRecorded { alert_id, .. } | EventPayload::OutcomeRecorded { alert_id, .. } => {
                alert_id
            }
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::Schema(m));
        if self.alert_id().trim().is_empty() {
            return bad("empty alert id".into());
        }
        match self {
            EventPayload::AlertCreated { alert, scores } => {
                if !(alert.latitude.is_finite() && (-90.0..=90.0).contains(&alert.latitude)) {
                    return bad(format!("latitude {} out of range", alert.latitude));
                }
                if !(alert.longitude.is_finite() && (-180.0..=180.0).contains(&alert.longitude)) {
                    return bad(format!("longitude {} out of range", alert.longitude));
                }
                if let Some(s) = scores {
                    for (name, v) in [("po_score", s.po_score), ("ref_score", s.ref_score)] {
                        if !(0.0..=1.0).contains(&v) {
                            return bad(format!("{name} {v} outside [0, 1]"));
                        }
                    }
                }
            }
            EventPayload::DecisionRecorded { note: Some(n), .. } if n.chars().count() > MAX_NOTE_CHARS => {
                return bad(format!("note longer than {MAX_NOTE_CHARS} characters"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub recorded_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    pub payload: EventPayload,
}

impl EventRecord {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }
}

fn frame(rec: &EventRecord) -> Result<Vec<u8>, StoreError> {
    let body = serde_json::to_vec(rec)?;
    let len = u32::try_from(body.len()).map_err(|_| StoreError::Schema("record larger than 4 GiB".into()))?;
    let mut out = Vec::with_capacity(FRAME_HEADER + body.len());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Log plus the state folded from it. With a backing file every append is
/// synced before it returns.
#[derive(Debug)]
pub struct EventLog {
    file: Option<(PathBuf, File)>,
    records: Vec<EventRecord>,
    state: StoreState,
    recovered_bytes: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { file: None, records: Vec::new(), state: StoreState::default(), recovered_bytes: 0 }
    }

    /// Opens (or creates) a log file. A torn final record is cut off; damage
    /// anywhere before the last record is reported as corruption.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(StoreError::from_io)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let mut log = Self::in_memory();
        let total = bytes.len();
        let mut at = 0usize;
        while at < total {
            let rest = total - at;
            if rest < FRAME_HEADER {
                break;
            }
            let len = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
            let crc = u32::from_le_bytes(bytes[at + 4..at + 8].try_into().expect("4 bytes"));
            if rest - FRAME_HEADER < len {
                break;
            }
            let end = at + FRAME_HEADER + len;
            let body = &bytes[at + FRAME_HEADER..end];
            let corrupt = |reason: String| StoreError::Corrupt { offset: at as u64, reason };
            if crc32fast::hash(body) != crc {
                if end == total {
                    break;
                }
                return Err(corrupt("checksum mismatch".into()));
            }
            let rec: EventRecord = serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
            if rec.seq != log.state.head() + 1 {
                return Err(corrupt(format!("sequence {} follows {}", rec.seq, log.state.head())));
            }
            log.state.apply(&rec).map_err(|e| corrupt(e.to_string()))?;
            log.records.push(rec);
            at = end;
        }
        if at < total {
            tracing::warn!(path = %path.display(), dropped = total - at, "truncating torn tail of event log");
            file.set_len(at as u64)?;
            file.sync_all()?;
            log.recovered_bytes = (total - at) as u64;
        }
        file.seek(SeekFrom::End(0))?;
        log.file = Some((path.to_path_buf(), file));
        Ok(log)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    /// Bytes discarded from a torn tail when the log was opened.
    pub fn recovered_bytes(&self) -> u64 {
        self.recovered_bytes
    }

    pub fn head(&self) -> u64 {
        self.state.head()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// State at the head of the log.
    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn append(&mut self, payload: EventPayload) -> Result<u64, StoreError> {
        self.append_keyed(payload, None)
    }

    /// Appends an event. A repeated idempotency key returns the sequence
    /// number of the original event and writes nothing.
    pub fn append_keyed(&mut self, payload: EventPayload, key: Option<&str>) -> Result<u64, StoreError> {
        if let Some(seq) = key.and_then(|k| self.state.seq_for_key(k)) {
            return Ok(seq);
        }
        payload.validate()?;
        self.state.check(&payload)?;
        let rec = EventRecord {
            seq: self.state.head() + 1,
            recorded_at: Utc::now(),
            idempotency_key: key.map(str::to_string),
            payload,
        };
        if let Some((_, file)) = &mut self.file {
            let framed = frame(&rec)?;
            let pos = file.stream_position()?;
            if let Err(e) = file.write_all(&framed).and_then(|_| file.sync_data()) {
                // leave no partial record behind
                let _ = file.set_len(pos);
                let _ = file.seek(SeekFrom::Start(pos));
                return Err(StoreError::from_io(e));
            }
        }
        self.state.apply(&rec)?;
        let seq = rec.seq;
        self.records.push(rec);
        Ok(seq)
    }

    /// Fold of the first `as_of` events.
    pub fn snapshot(&self, as_of: u64) -> Result<StoreState, StoreError> {
        if as_of > self.head() {
            return Err(StoreError::PastHead { as_of, head: self.head() });
        }
        if as_of == self.head() {
            return Ok(self.state.clone());
        }
        let mut s = StoreState::default();
        for rec in &self.records[..as_of as usize] {
            s.apply(rec)?;
        }
        Ok(s)
    }
}
