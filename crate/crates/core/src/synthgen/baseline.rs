//! Monthly referral and found counts of the recorded manual review.

use std::collections::{BTreeMap, HashMap};

use chrono::{Datelike, Duration, NaiveDate};

use super::GenError;
use crate::domain::{Alert, OutcomeCode, OutcomeRecord};
use crate::evaluate::BaselineMonth;

/// A referral counts as found when the person was found within this many days.
pub const FOUND_WITHIN_DAYS: i64 = 7;

fn month_of(d: NaiveDate) -> NaiveDate {
    d.with_day(1).expect("day 1 exists")
}

pub fn monthly_alert_counts(alerts: &[Alert]) -> BTreeMap<NaiveDate, usize> {
    let mut m = BTreeMap::new();
    for a in alerts {
        *m.entry(month_of(a.created_at.date_naive())).or_insert(0) += 1;
    }
    m
}

fn first_outcomes(outcomes: &[OutcomeRecord]) -> HashMap<&str, &OutcomeRecord> {
    let mut first: HashMap<&str, &OutcomeRecord> = HashMap::new();
    for o in outcomes {
        let e = first.entry(o.alert_id.as_str()).or_insert(o);
        if o.resolved_at < e.resolved_at {
            *e = o;
        }
    }
    first
}

fn count_month(alerts: &[Alert], first: &HashMap<&str, &OutcomeRecord>, month: NaiveDate) -> Option<BaselineMonth> {
    let mut any = false;
    let (mut referrals, mut found) = (0, 0);
    for a in alerts.iter().filter(|a| month_of(a.created_at.date_naive()) == month) {
        any = true;
        let Some(o) = first.get(a.id.as_str()) else {
            continue;
        };
        if o.outcome_code.labels().referral {
            referrals += 1;
            if o.outcome_code == OutcomeCode::PersonFound
                && o.resolved_at <= a.created_at + Duration::days(FOUND_WITHIN_DAYS)
            {
                found += 1;
            }
        }
    }
    any.then(|| BaselineMonth::new(month, referrals, found))
}

/// Referrals made for alerts created in `month` and how many of them found the person.
pub fn simulate_manual_baseline(
    alerts: &[Alert],
    outcomes: &[OutcomeRecord],
    month: NaiveDate,
) -> Result<BaselineMonth, GenError> {
    let month = month_of(month);
    count_month(alerts, &first_outcomes(outcomes), month).ok_or(GenError::EmptyMonth(month))
}

/// Baselines for every month that has alerts.
pub fn manual_baselines(alerts: &[Alert], outcomes: &[OutcomeRecord]) -> Vec<BaselineMonth> {
    let first = first_outcomes(outcomes);
    monthly_alert_counts(alerts).keys().filter_map(|&m| count_month(alerts, &first, m)).collect()
}
