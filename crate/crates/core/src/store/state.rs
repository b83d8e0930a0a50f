use std::collections::HashMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::{EventPayload, EventRecord};
use crate::domain::{Alert, Decision, LabelPair, OutcomeRecord, ReviewStatus};

/// Scores attached to an alert when it was ingested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertScores {
    pub po_score: f64,
    pub ref_score: f64,
    pub auto_referral: bool,
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertState {
    pub alert: Alert,
    pub scores: Option<AlertScores>,
    pub status: ReviewStatus,
    pub decision: Option<Decision>,
    pub note: Option<String>,
    pub outcome: Option<OutcomeRecord>,
    pub created_seq: u64,
}

impl AlertState {
    pub fn labels(&self) -> Option<LabelPair> {
        self.outcome.as_ref().map(|o| o.outcome_code.labels())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("unknown alert {0}")]
    UnknownAlert(String),
    #[error("alert {0} already exists")]
    DuplicateAlert(String),
    #[error("alert {id}: cannot {action} from {from:?}")]
    Illegal { id: String, from: ReviewStatus, action: &'static str },
    #[error("alert {id}: outcome resolved at {resolved_at} precedes creation")]
    ResolvedBeforeCreated { id: String, resolved_at: DateTime<Utc> },
}

impl TransitionError {
    pub fn is_unknown(&self) -> bool {
        matches!(self, TransitionError::UnknownAlert(_))
    }
}

/// Review state folded from an event prefix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoreState {
    alerts: HashMap<String, AlertState>,
    order: Vec<String>,
    keys: HashMap<String, u64>,
    head: u64,
}

impl StoreState {
    /// Sequence number of the last applied event (0 when empty).
    pub fn head(&self) -> u64 {
        self.head
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AlertState> {
        self.alerts.get(id)
    }

    /// Alerts in ingestion order.
    pub fn iter(&self) -> impl Iterator<Item = &AlertState> {
        self.order.iter().map(|id| &self.alerts[id])
    }

    /// Sequence number of the event that carried this idempotency key.
    pub fn seq_for_key(&self, key: &str) -> Option<u64> {
        self.keys.get(key).copied()
    }

    /// Checks that `payload` is a legal next event without applying it.
    pub fn check(&self, payload: &EventPayload) -> Result<(), TransitionError> {
        match payload {
            EventPayload::AlertCreated { alert, .. } => {
                if self.alerts.contains_key(&alert.id) {
                    return Err(TransitionError::DuplicateAlert(alert.id.clone()));
                }
            }
            EventPayload::DecisionRecorded { alert_id, decision, .. } => {
                let s = self.alerts.get(alert_id).ok_or_else(|| TransitionError::UnknownAlert(alert_id.clone()))?;
                if s.status.after_decision(*decision).is_none() {
                    return Err(TransitionError::Illegal {
                        id: alert_id.clone(),
                        from: s.status,
                        action: "record a decision",
                    });
                }
            }
            EventPayload::OutcomeRecorded { alert_id, resolved_at, .. } => {
                let s = self.alerts.get(alert_id).ok_or_else(|| TransitionError::UnknownAlert(alert_id.clone()))?;
                if s.status.after_outcome().is_none() {
                    return Err(TransitionError::Illegal {
                        id: alert_id.clone(),
                        from: s.status,
                        action: "record an outcome",
                    });
                }
                if *resolved_at < s.alert.created_at {
                    return Err(TransitionError::ResolvedBeforeCreated {
                        id: alert_id.clone(),
                        resolved_at: *resolved_at,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, rec: &EventRecord) -> Result<(), TransitionError> {
        self.check(&rec.payload)?;
        match &rec.payload {
            EventPayload::AlertCreated { alert, scores } => {
                let status = if scores.is_some_and(|s| s.auto_referral) {
                    ReviewStatus::AutoReferred
                } else {
                    ReviewStatus::PendingReview
                };
                self.order.push(alert.id.clone());
                self.alerts.insert(
                    alert.id.clone(),
                    AlertState {
                        alert: alert.clone(),
                        scores: *scores,
                        status,
                        decision: None,
                        note: None,
                        outcome: None,
                        created_seq: rec.seq,
                    },
                );
            }
            EventPayload::DecisionRecorded { alert_id, decision, note } => {
                let s = self.alerts.get_mut(alert_id).expect("checked");
                s.status = s.status.after_decision(*decision).expect("checked");
                s.decision = Some(*decision);
                s.note = note.clone();
            }
            EventPayload::OutcomeRecorded { alert_id, outcome_code, resolved_at } => {
                let s = self.alerts.get_mut(alert_id).expect("checked");
                s.status = s.status.after_outcome().expect("checked");
                s.outcome = Some(OutcomeRecord {
                    alert_id: alert_id.clone(),
                    outcome_code: *outcome_code,
                    resolved_at: *resolved_at,
                });
            }
        }
        if let Some(k) = &rec.idempotency_key {
            self.keys.insert(k.clone(), rec.seq);
        }
        self.head = rec.seq;
        Ok(())
    }

    /// Outcomes recorded so far, in ingestion order of their alerts.
    pub fn outcomes(&self) -> Vec<OutcomeRecord> {
        self.iter().filter_map(|s| s.outcome.clone()).collect()
    }
}
