//! Read models over the store state: queue entries, paging and live metrics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use streetrank_core::domain::{Alert, Decision, OutcomeCode, Positive, ReviewStatus};
use streetrank_core::evaluate::{bias_slices, rank_cmp, BiasRow, Demographics, Quadrant, ScoredAlert};
use streetrank_core::store::{AlertState, StoreState};
use streetrank_core::synthgen::FOUND_WITHIN_DAYS;

use crate::scorer::ModelInfo;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub alert: Alert,
    pub po_score: Option<f64>,
    pub ref_score: Option<f64>,
    pub quadrant: Option<Quadrant>,
    pub auto_referral: bool,
    pub duplicate: bool,
    pub status: ReviewStatus,
    pub decision: Option<Decision>,
    pub note: Option<String>,
    pub outcome_code: Option<OutcomeCode>,
}

pub fn quadrant_of(info: &ModelInfo, po: f64, referral: f64) -> Option<Quadrant> {
    Some(Quadrant::of(referral >= info.horizontal_threshold?, po >= info.vertical_threshold?))
}

pub fn entry(s: &AlertState, info: &ModelInfo) -> QueueEntry {
    let sc = s.scores;
    QueueEntry {
        alert: s.alert.clone(),
        po_score: sc.map(|x| x.po_score),
        ref_score: sc.map(|x| x.ref_score),
        quadrant: sc.and_then(|x| quadrant_of(info, x.po_score, x.ref_score)),
        auto_referral: sc.is_some_and(|x| x.auto_referral),
        duplicate: sc.is_some_and(|x| x.duplicate),
        status: s.status,
        decision: s.decision,
        note: s.note.clone(),
        outcome_code: s.outcome.as_ref().map(|o| o.outcome_code),
    }
}

/// Position of an alert in the review order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankKey {
    pub score: f64,
    pub created_at: DateTime<Utc>,
    pub id: String,
}

impl RankKey {
    fn of(s: &AlertState) -> Self {
        Self {
            score: s.scores.map_or(f64::NEG_INFINITY, |x| x.po_score),
            created_at: s.alert.created_at,
            id: s.alert.id.clone(),
        }
    }

    fn as_scored(&self) -> ScoredAlert {
        ScoredAlert { id: self.id.clone(), created_at: self.created_at, score: self.score, label: Positive::Null }
    }

    pub fn order(&self, other: &Self) -> Ordering {
        rank_cmp(&self.as_scored(), &other.as_scored())
    }

    /// Opaque cursor text.
    pub fn encode(&self) -> String {
        format!("{:016x}.{}.{}", self.score.to_bits(), self.created_at.timestamp_micros(), self.id)
    }

    pub fn decode(s: &str) -> Option<Self> {
        let mut parts = s.splitn(3, '.');
        let bits = u64::from_str_radix(parts.next()?, 16).ok()?;
        let micros: i64 = parts.next()?.parse().ok()?;
        let id = parts.next().filter(|id| !id.is_empty())?.to_string();
        Some(Self { score: f64::from_bits(bits), created_at: DateTime::from_timestamp_micros(micros)?, id })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub entries: Vec<QueueEntry>,
    pub next_cursor: Option<String>,
}

/// Alerts awaiting review, best positive-outcome score first; starts after `after`.
pub fn queue(state: &StoreState, info: &ModelInfo, limit: usize, after: Option<&RankKey>) -> QueuePage {
    let mut pending: Vec<(RankKey, &AlertState)> =
        state.iter().filter(|s| s.status == ReviewStatus::PendingReview).map(|s| (RankKey::of(s), s)).collect();
    pending.sort_by(|a, b| a.0.order(&b.0));
    let start = after.map_or(0, |k| pending.partition_point(|(p, _)| p.order(k) != Ordering::Greater));
    let page: Vec<&(RankKey, &AlertState)> = pending[start..].iter().take(limit).collect();
    let more = start + page.len() < pending.len();
    QueuePage {
        entries: page.iter().map(|(_, s)| entry(s, info)).collect(),
        next_cursor: if more { page.last().map(|(k, _)| k.encode()) } else { None },
    }
}

/// Positive-outcome label from a recorded outcome, using the evaluation's time span.
pub fn live_positive(s: &AlertState) -> Positive {
    match &s.outcome {
        None => Positive::Null,
        Some(o) => {
            let p = o.outcome_code.labels().positive;
            if p == Positive::Yes && o.resolved_at > s.alert.created_at + Duration::days(FOUND_WITHIN_DAYS) {
                Positive::No
            } else {
                p
            }
        }
    }
}

fn was_referred(s: &AlertState) -> bool {
    s.decision == Some(Decision::Referred) || s.scores.is_some_and(|x| x.auto_referral)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    /// Number of referred alerts; the slices compare the top `k` by score with the pool.
    pub k: usize,
    pub rows: Vec<BiasRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub alerts: usize,
    pub queue_depth: usize,
    pub status_counts: BTreeMap<String, usize>,
    pub referrals: usize,
    pub resolved_referrals: usize,
    pub found: usize,
    /// Absent until a referral has an outcome.
    pub found_rate: Option<f64>,
    /// Absent when the models carry no quadrant thresholds.
    pub quadrants: Option<BTreeMap<Quadrant, usize>>,
    /// Absent until something has been referred.
    pub bias: Option<BiasSummary>,
}

pub fn metrics(state: &StoreState, info: &ModelInfo) -> LiveMetrics {
    let mut status_counts = BTreeMap::new();
    let (mut referrals, mut resolved, mut found) = (0, 0, 0);
    let mut quadrants: BTreeMap<Quadrant, usize> = Quadrant::ALL.iter().map(|q| (*q, 0)).collect();
    let mut scored = Vec::new();
    let mut demo = Vec::new();
    for s in state.iter() {
        *status_counts.entry(format!("{:?}", s.status)).or_insert(0) += 1;
        if was_referred(s) {
            referrals += 1;
            if s.outcome.is_some() {
                resolved += 1;
                found += usize::from(live_positive(s) == Positive::Yes);
            }
        }
        if let Some(x) = s.scores {
            if let Some(q) = quadrant_of(info, x.po_score, x.ref_score) {
                *quadrants.get_mut(&q).expect("all quadrants") += 1;
            }
            scored.push(ScoredAlert {
                id: s.alert.id.clone(),
                created_at: s.alert.created_at,
                score: x.po_score,
                label: live_positive(s),
            });
            demo.push(Demographics { gender: s.alert.gender, age_band: s.alert.age_band });
        }
    }
    let k = referrals.min(scored.len());
    let bias = (k > 0).then(|| bias_slices(&scored, &demo, k).ok()).flatten().map(|rows| BiasSummary { k, rows });
    LiveMetrics {
        alerts: state.len(),
        queue_depth: status_counts.get("PendingReview").copied().unwrap_or(0),
        status_counts,
        referrals,
        resolved_referrals: resolved,
        found,
        found_rate: (resolved > 0).then(|| found as f64 / resolved as f64),
        quadrants: (info.horizontal_threshold.is_some() && info.vertical_threshold.is_some()).then_some(quadrants),
        bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn cursor_round_trips_including_dotted_ids() {
        let k = RankKey {
            score: 0.1 + 0.2,
            created_at: Utc.timestamp_opt(1_530_000_000, 123_000).unwrap(),
            id: "a.b.c".into(),
        };
        assert_eq!(RankKey::decode(&k.encode()), Some(k));
        assert_eq!(RankKey::decode("zz.1.a"), None);
        assert_eq!(RankKey::decode("00.1."), None);
    }

    #[test]
    fn quadrant_needs_both_thresholds() {
        let mut info = ModelInfo { horizontal_threshold: Some(0.5), ..Default::default() };
        assert_eq!(quadrant_of(&info, 0.9, 0.9), None);
        info.vertical_threshold = Some(0.3);
        assert_eq!(quadrant_of(&info, 0.3, 0.4), Some(Quadrant::BottomRight));
        assert_eq!(quadrant_of(&info, 0.2, 0.5), Some(Quadrant::TopLeft));
    }
}
