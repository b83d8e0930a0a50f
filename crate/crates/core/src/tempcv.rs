//! Month forward-chaining temporal cross-validation with label windows and buffers.

use std::collections::HashMap;
use std::io::Write;

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{format_ts, Alert, OutcomeRecord, Positive};

#[derive(Debug, Error, PartialEq)]
pub enum CvError {
    #[error("invalid cross-validation config: {0}")]
    Config(String),
    #[error("date range {start} .. {end} is too short for one fold")]
    RangeTooShort { start: NaiveDate, end: NaiveDate },
    #[error("outcome references unknown alert `{0}`")]
    UnknownAlert(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub data_start: NaiveDate,
    /// Last day on which alerts are created; outcomes may resolve later.
    pub data_end: NaiveDate,
    pub train_label_span_days: i64,
    pub test_label_span_days: i64,
    pub buffer_days: i64,
    pub training_span_months: u32,
    pub test_span_months: u32,
    pub update_frequency_months: u32,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            data_start: NaiveDate::from_ymd_opt(2017, 12, 1).expect("valid date"),
            data_end: NaiveDate::from_ymd_opt(2019, 2, 28).expect("valid date"),
            train_label_span_days: 7,
            test_label_span_days: 7,
            buffer_days: 7,
            training_span_months: 24,
            test_span_months: 1,
            update_frequency_months: 1,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<(), CvError> {
        if self.data_start >= self.data_end {
            return Err(CvError::Config("data_start must precede data_end".into()));
        }
        if self.train_label_span_days <= 0 || self.test_label_span_days <= 0 || self.buffer_days < 0 {
            return Err(CvError::Config("label spans must be positive and the buffer non-negative".into()));
        }
        if self.training_span_months == 0 || self.test_span_months == 0 || self.update_frequency_months == 0 {
            return Err(CvError::Config("month spans must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_id: u32,
    pub train_start: DateTime<Utc>,
    /// Exclusive.
    pub train_end: DateTime<Utc>,
    pub test_start: DateTime<Utc>,
    /// Exclusive.
    pub test_end: DateTime<Utc>,
    pub buffer_days: i64,
    pub train_label_span_days: i64,
    pub test_label_span_days: i64,
}

impl FoldPlan {
    /// First day of the test period.
    pub fn test_month(&self) -> NaiveDate {
        self.test_start.date_naive()
    }

    /// Outcomes resolved after this instant are not observable for the test rows.
    pub fn test_horizon(&self) -> DateTime<Utc> {
        self.test_end + Duration::days(self.test_label_span_days)
    }
}

fn midnight(d: NaiveDate) -> DateTime<Utc> {
    d.and_hms_opt(0, 0, 0).expect("valid time").and_utc()
}

fn month_start(d: NaiveDate) -> NaiveDate {
    d.with_day(1).expect("day 1 exists")
}

/// Fold i tests the i-th period after the first month of data and trains on
/// everything before it, minus the buffer, capped at the training span.
pub fn make_folds(cfg: &CvConfig) -> Result<Vec<FoldPlan>, CvError> {
    cfg.validate()?;
    let first = month_start(cfg.data_start);
    let data_start = midnight(cfg.data_start);
    let data_stop = midnight(cfg.data_end) + Duration::days(1);
    let mut folds = Vec::new();
    for i in 1u32.. {
        let test_day = first + Months::new(i * cfg.update_frequency_months);
        let test_start = midnight(test_day);
        if test_start >= data_stop {
            break;
        }
        let test_end = midnight(test_day + Months::new(cfg.test_span_months)).min(data_stop);
        let train_end = test_start - Duration::days(cfg.buffer_days);
        let cap = midnight(train_end.date_naive() - Months::new(cfg.training_span_months));
        let train_start = data_start.max(cap);
        if train_end <= train_start {
            continue;
        }
        folds.push(FoldPlan {
            fold_id: folds.len() as u32 + 1,
            train_start,
            train_end,
            test_start,
            test_end,
            buffer_days: cfg.buffer_days,
            train_label_span_days: cfg.train_label_span_days,
            test_label_span_days: cfg.test_label_span_days,
        });
    }
    if folds.is_empty() {
        return Err(CvError::RangeTooShort { start: cfg.data_start, end: cfg.data_end });
    }
    Ok(folds)
}

/// A test alert with its labels; `positive` may be `Null`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestRow {
    pub index: usize,
    pub referral: bool,
    pub positive: Positive,
}

/// Row indices into the alert slice passed to [`apply_label_window`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldRows {
    /// (alert index, found within the label span)
    pub train_positive: Vec<(usize, bool)>,
    /// (alert index, referred)
    pub train_referral: Vec<(usize, bool)>,
    pub test: Vec<TestRow>,
}

/// Labels of one resolved outcome, with "found" only counting inside the span.
fn windowed_positive(alert: &Alert, outcome: &OutcomeRecord, span_days: i64) -> (bool, Positive) {
    let labels = outcome.outcome_code.labels();
    let positive = match labels.positive {
        Positive::Yes if outcome.resolved_at > alert.created_at + Duration::days(span_days) => Positive::No,
        p => p,
    };
    (labels.referral, positive)
}

/// First-resolved outcome per alert index.
pub fn index_outcomes<'a>(
    alerts: &[Alert],
    outcomes: &'a [OutcomeRecord],
) -> Result<Vec<Option<&'a OutcomeRecord>>, CvError> {
    let pos: HashMap<&str, usize> = alerts.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
    let mut by_alert: Vec<Option<&OutcomeRecord>> = vec![None; alerts.len()];
    for o in outcomes {
        let &i = pos.get(o.alert_id.as_str()).ok_or_else(|| CvError::UnknownAlert(o.alert_id.clone()))?;
        if by_alert[i].is_none_or(|prev| o.resolved_at < prev.resolved_at) {
            by_alert[i] = Some(o);
        }
    }
    Ok(by_alert)
}

/// Selects and labels the training and test rows of one fold.
///
/// Training keeps alerts created in `[train_start, train_end)` whose outcome was
/// resolved by `train_end`; NULL positives are dropped from the positive-outcome
/// set only. Test keeps alerts created in the test period whose outcome
/// resolved before the test horizon, NULLs included.
pub fn apply_label_window(alerts: &[Alert], outcomes: &[OutcomeRecord], fold: &FoldPlan) -> Result<FoldRows, CvError> {
    let by_alert = index_outcomes(alerts, outcomes)?;
    Ok(label_rows(alerts, &by_alert, fold))
}

pub fn label_rows(alerts: &[Alert], by_alert: &[Option<&OutcomeRecord>], fold: &FoldPlan) -> FoldRows {
    let mut rows = FoldRows::default();
    let horizon = fold.test_horizon();
    for (i, a) in alerts.iter().enumerate() {
        let Some(o) = by_alert[i] else { continue };
        if a.created_at >= fold.train_start && a.created_at < fold.train_end {
            if o.resolved_at > fold.train_end {
                continue;
            }
            let (referral, positive) = windowed_positive(a, o, fold.train_label_span_days);
            rows.train_referral.push((i, referral));
            if positive != Positive::Null {
                rows.train_positive.push((i, positive == Positive::Yes));
            }
        } else if a.created_at >= fold.test_start && a.created_at < fold.test_end && o.resolved_at <= horizon {
            let (referral, positive) = windowed_positive(a, o, fold.test_label_span_days);
            rows.test.push(TestRow { index: i, referral, positive });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

/// Latest information timestamp consumed when building one feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowProvenance {
    pub alert_id: String,
    pub split: Split,
    pub created_at: DateTime<Utc>,
    pub max_info_ts: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub fold_id: u32,
    pub rows_checked: usize,
    pub offenders: Vec<String>,
}

impl LeakageReport {
    pub fn passed(&self) -> bool {
        self.offenders.is_empty()
    }
}

/// Training rows may not use anything after `train_end`; test rows nothing after their own creation.
pub fn leakage_check(fold: &FoldPlan, provenance: &[RowProvenance]) -> LeakageReport {
    let offenders = provenance
        .iter()
        .filter(|p| match p.split {
            Split::Train => p.max_info_ts > fold.train_end || p.max_info_ts > p.created_at,
            Split::Test => p.max_info_ts > p.created_at,
        })
        .map(|p| p.alert_id.clone())
        .collect();
    LeakageReport { fold_id: fold.fold_id, rows_checked: provenance.len(), offenders }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldCounts {
    pub train_positive: usize,
    pub train_referral: usize,
    pub test: usize,
}

impl From<&FoldRows> for FoldCounts {
    fn from(r: &FoldRows) -> Self {
        Self { train_positive: r.train_positive.len(), train_referral: r.train_referral.len(), test: r.test.len() }
    }
}

/// Audit CSV: one line per fold with boundaries and (optionally) row counts.
pub fn write_folds_csv<W: Write>(folds: &[FoldPlan], counts: Option<&[FoldCounts]>, w: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fold",
        "train_start",
        "train_end",
        "test_start",
        "test_end",
        "train_positive_rows",
        "train_referral_rows",
        "test_rows",
    ])?;
    for (i, f) in folds.iter().enumerate() {
        let c = counts.and_then(|c| c.get(i));
        let opt = |v: Option<usize>| v.map_or_else(String::new, |v| v.to_string());
        wtr.write_record([
            f.fold_id.to_string(),
            format_ts(f.train_start),
            format_ts(f.train_end),
            format_ts(f.test_start),
            format_ts(f.test_end),
            opt(c.map(|c| c.train_positive)),
            opt(c.map(|c| c.train_referral)),
            opt(c.map(|c| c.test)),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
