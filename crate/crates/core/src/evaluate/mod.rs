//! Ranking metrics at k with NULL-label semantics, baseline comparison,
//! quadrant analysis, prediction-set similarity and demographic slices.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgeBand, Gender, Positive};

pub mod report;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k ladder must be strictly ascending")]
    LadderOrder,
    #[error("{what} = {n} exceeds pool size {pool}")]
    ExceedsPool { what: &'static str, n: usize, pool: usize },
    #[error("score vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no baseline for month {0}")]
    MissingMonth(NaiveDate),
}

/// One scored test alert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAlert {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub score: f64,
    pub label: Positive,
}

/// Score descending, then creation time ascending, then id ascending.
pub fn rank_cmp(a: &ScoredAlert, b: &ScoredAlert) -> Ordering {
    b.score.total_cmp(&a.score).then(a.created_at.cmp(&b.created_at)).then_with(|| a.id.cmp(&b.id))
}

/// Indices of `alerts` in rank order.
pub fn rank_order(alerts: &[ScoredAlert]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..alerts.len()).collect();
    idx.sort_by(|&i, &j| rank_cmp(&alerts[i], &alerts[j]));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtK {
    /// Requested cut-off.
    pub k: usize,
    /// Cut-off actually used (clamped to the pool size).
    pub k_used: usize,
    pub clamped: bool,
    pub found: usize,
    pub not_found: usize,
    pub null_count: usize,
    /// Positives in the whole pool.
    pub total_found: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub found_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn at_k_from_counts(k: usize, pool: usize, ranked_labels: impl Iterator<Item = Positive>, total_found: usize) -> AtK {
    let k_used = k.min(pool);
    let (mut found, mut not_found, mut null_count) = (0, 0, 0);
    for label in ranked_labels.take(k_used) {
        match label {
            Positive::Yes => found += 1,
            Positive::No => not_found += 1,
            Positive::Null => null_count += 1,
        }
    }
    AtK {
        k,
        k_used,
        clamped: k_used < k,
        found,
        not_found,
        null_count,
        total_found,
        precision: ratio(found, found + not_found),
        recall: ratio(found, total_found),
        found_rate: ratio(found, k_used),
    }
}

/// Precision, recall, found rate and NULL count in the top `k`.
pub fn metrics_at_k(alerts: &[ScoredAlert], k: usize) -> Result<AtK, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let order = rank_order(alerts);
    let total = alerts.iter().filter(|a| a.label == Positive::Yes).count();
    Ok(at_k_from_counts(k, alerts.len(), order.iter().map(|&i| alerts[i].label), total))
}

/// One row per k; the pool is ranked once.
pub fn metrics_ladder(alerts: &[ScoredAlert], ladder: &[usize]) -> Result<Vec<AtK>, EvalError> {
    if ladder.contains(&0) {
        return Err(EvalError::ZeroK);
    }
    if ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::LadderOrder);
    }
    let order = rank_order(alerts);
    let ranked: Vec<Positive> = order.iter().map(|&i| alerts[i].label).collect();
    let total = ranked.iter().filter(|&&l| l == Positive::Yes).count();
    Ok(ladder.iter().map(|&k| at_k_from_counts(k, ranked.len(), ranked.iter().copied(), total)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold_id: u32,
    pub pool_size: usize,
    pub rows: Vec<AtK>,
}

/// Arithmetic mean over folds where the metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedRow {
    pub k: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub found_rate: Option<f64>,
    pub null_count: f64,
    pub folds: usize,
}

/// Counts summed over folds before dividing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledRow {
    pub k: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub found_rate: Option<f64>,
    pub null_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub ladder: Vec<usize>,
    pub folds: Vec<FoldMetrics>,
    pub averaged: Vec<AveragedRow>,
    pub pooled: Vec<PooledRow>,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl MetricsTable {
    pub fn new(ladder: Vec<usize>, folds: Vec<FoldMetrics>) -> Self {
        let mut averaged = Vec::new();
        let mut pooled = Vec::new();
        for (j, &k) in ladder.iter().enumerate() {
            let rows: Vec<&AtK> = folds.iter().map(|f| &f.rows[j]).collect();
            averaged.push(AveragedRow {
                k,
                precision: mean_defined(rows.iter().map(|r| r.precision)),
                recall: mean_defined(rows.iter().map(|r| r.recall)),
                found_rate: mean_defined(rows.iter().map(|r| r.found_rate)),
                null_count: if rows.is_empty() {
                    0.0
                } else {
                    rows.iter().map(|r| r.null_count as f64).sum::<f64>() / rows.len() as f64
                },
                folds: rows.len(),
            });
            let sum = |f: fn(&AtK) -> usize| rows.iter().map(|r| f(r)).sum::<usize>();
            let found = sum(|r| r.found);
            pooled.push(PooledRow {
                k,
                precision: ratio(found, found + sum(|r| r.not_found)),
                recall: ratio(found, sum(|r| r.total_found)),
                found_rate: ratio(found, sum(|r| r.k_used)),
                null_count: sum(|r| r.null_count),
            });
        }
        Self { ladder, folds, averaged, pooled }
    }

    pub fn averaged_at(&self, k: usize) -> Option<&AveragedRow> {
        self.averaged.iter().find(|r| r.k == k)
    }
}

/// Manual-review statistics for one calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineMonth {
    /// First day of the month.
    pub month: NaiveDate,
    pub referral_count: usize,
    pub found_count: usize,
    pub found_rate: Option<f64>,
}

impl BaselineMonth {
    pub fn new(month: NaiveDate, referral_count: usize, found_count: usize) -> Self {
        Self { month, referral_count, found_count, found_rate: ratio(found_count, referral_count) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftRow {
    pub fold_id: u32,
    pub month: NaiveDate,
    pub k: usize,
    pub clamped: bool,
    pub model_found_rate: Option<f64>,
    pub baseline_found_rate: Option<f64>,
    pub uplift: Option<f64>,
}

/// Model found rate at k = the month's referral count, against the manual found rate.
pub fn baseline_compare(
    fold_id: u32,
    month: NaiveDate,
    alerts: &[ScoredAlert],
    baselines: &[BaselineMonth],
) -> Result<UpliftRow, EvalError> {
    let b = baselines.iter().find(|b| b.month == month).ok_or(EvalError::MissingMonth(month))?;
    let (model, clamped) = if b.referral_count == 0 {
        (None, false)
    } else {
        let m = metrics_at_k(alerts, b.referral_count)?;
        (m.found_rate, m.clamped)
    };
    let uplift = match (model, b.found_rate) {
        (Some(m), Some(base)) if base > 0.0 => Some(m / base),
        _ => None,
    };
    Ok(UpliftRow {
        fold_id,
        month,
        k: b.referral_count,
        clamped,
        model_found_rate: model,
        baseline_found_rate: b.found_rate,
        uplift,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftSummary {
    pub mean_model_found_rate: Option<f64>,
    pub mean_baseline_found_rate: Option<f64>,
    /// Ratio of the two means.
    pub uplift_of_means: Option<f64>,
    /// Mean of per-fold ratios.
    pub mean_uplift: Option<f64>,
}

pub fn summarize_uplift(rows: &[UpliftRow]) -> UpliftSummary {
    let m = mean_defined(rows.iter().map(|r| r.model_found_rate));
    let b = mean_defined(rows.iter().map(|r| r.baseline_found_rate));
    UpliftSummary {
        mean_model_found_rate: m,
        mean_baseline_found_rate: b,
        uplift_of_means: match (m, b) {
            (Some(m), Some(b)) if b > 0.0 => Some(m / b),
            _ => None,
        },
        mean_uplift: mean_defined(rows.iter().map(|r| r.uplift)),
    }
}

/// Alert as seen by the quadrant and bias analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantAlert {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub po_score: f64,
    pub referral_score: f64,
    pub referred: bool,
    pub positive: Positive,
    pub gender: Gender,
    pub age_band: AgeBand,
    pub word_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    /// Likely referred and likely positive.
    TopRight,
    TopLeft,
    /// Unlikely to be referred but likely positive.
    BottomRight,
    BottomLeft,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::TopRight, Quadrant::TopLeft, Quadrant::BottomRight, Quadrant::BottomLeft];

    pub fn of(above: bool, right: bool) -> Self {
        match (above, right) {
            (true, true) => Quadrant::TopRight,
            (true, false) => Quadrant::TopLeft,
            (false, true) => Quadrant::BottomRight,
            (false, false) => Quadrant::BottomLeft,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadrantSummary {
    pub count: usize,
    pub referred: usize,
    pub positive_yes: usize,
    pub positive_no: usize,
    pub positive_null: usize,
    pub gender: BTreeMap<String, usize>,
    pub age_band: BTreeMap<String, usize>,
    pub mean_word_count: Option<f64>,
    pub female_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport {
    /// Referral-score threshold; `None` when no point lies above it.
    pub horizontal_threshold: Option<f64>,
    /// Positive-outcome-score threshold; `None` when no point lies right of it.
    pub vertical_threshold: Option<f64>,
    pub n_referrals: usize,
    pub n_found: usize,
    pub assignments: Vec<(String, Quadrant)>,
    pub quadrants: BTreeMap<Quadrant, QuadrantSummary>,
}

impl QuadrantReport {
    pub fn count(&self, q: Quadrant) -> usize {
        self.quadrants.get(&q).map_or(0, |s| s.count)
    }
}

/// Marks the top `n` alerts by `score` with the deterministic tiebreak.
fn top_n_mask(alerts: &[QuadrantAlert], n: usize, score: impl Fn(&QuadrantAlert) -> f64) -> (Vec<bool>, Option<f64>) {
    let mut idx: Vec<usize> = (0..alerts.len()).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (&alerts[i], &alerts[j]);
        score(b).total_cmp(&score(a)).then(a.created_at.cmp(&b.created_at)).then_with(|| a.id.cmp(&b.id))
    });
    let mut mask = vec![false; alerts.len()];
    for &i in &idx[..n] {
        mask[i] = true;
    }
    let threshold = n.checked_sub(1).map(|last| score(&alerts[idx[last]]));
    (mask, threshold)
}

/// Splits alerts by referral score (top `n_referrals` are "above") and
/// positive-outcome score (top `n_found` are "right").
pub fn quadrant_report(
    alerts: &[QuadrantAlert],
    n_referrals: usize,
    n_found: usize,
) -> Result<QuadrantReport, EvalError> {
    if n_referrals > alerts.len() {
        return Err(EvalError::ExceedsPool { what: "n_referrals", n: n_referrals, pool: alerts.len() });
    }
    if n_found > alerts.len() {
        return Err(EvalError::ExceedsPool { what: "n_found", n: n_found, pool: alerts.len() });
    }
    let (above, h) = top_n_mask(alerts, n_referrals, |a| a.referral_score);
    let (right, v) = top_n_mask(alerts, n_found, |a| a.po_score);
    let mut quadrants: BTreeMap<Quadrant, QuadrantSummary> =
        Quadrant::ALL.iter().map(|&q| (q, QuadrantSummary::default())).collect();
    let mut words: BTreeMap<Quadrant, usize> = BTreeMap::new();
    let mut assignments = Vec::with_capacity(alerts.len());
    for (i, a) in alerts.iter().enumerate() {
        let q = Quadrant::of(above[i], right[i]);
        assignments.push((a.id.clone(), q));
        let s = quadrants.get_mut(&q).expect("all quadrants present");
        s.count += 1;
        s.referred += a.referred as usize;
        match a.positive {
            Positive::Yes => s.positive_yes += 1,
            Positive::No => s.positive_no += 1,
            Positive::Null => s.positive_null += 1,
        }
        *s.gender.entry(a.gender.as_str().to_string()).or_default() += 1;
        *s.age_band.entry(a.age_band.as_str().to_string()).or_default() += 1;
        *words.entry(q).or_default() += a.word_count;
    }
    for (q, s) in quadrants.iter_mut() {
        s.mean_word_count = ratio(words.get(q).copied().unwrap_or(0), s.count);
        s.female_share = ratio(s.gender.get(Gender::Female.as_str()).copied().unwrap_or(0), s.count);
    }
    Ok(QuadrantReport { horizontal_threshold: h, vertical_threshold: v, n_referrals, n_found, assignments, quadrants })
}

/// Ids of the top `k` alerts.
pub fn top_k_ids(alerts: &[ScoredAlert], k: usize) -> BTreeSet<String> {
    rank_order(alerts).into_iter().take(k).map(|i| alerts[i].id.clone()).collect()
}

/// |A ∩ B| / |A ∪ B|; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub fn jaccard_matrix(sets: &[BTreeSet<String>]) -> Vec<Vec<f64>> {
    let n = sets.len();
    let mut m = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = jaccard(&sets[i], &sets[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Groups smaller than this are not reported.
pub const MIN_GROUP_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub attribute: String,
    pub group: String,
    pub suppressed: bool,
    /// Absent for suppressed groups.
    pub pool_count: Option<usize>,
    /// Share of the group's alerts that make the top k.
    pub selection_rate: Option<f64>,
    /// Found rate among the group's top-k alerts.
    pub found_rate: Option<f64>,
    /// Group share of the top k over group share of the pool.
    pub representation_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub gender: Gender,
    pub age_band: AgeBand,
}

/// Per-gender and per-age-band selection statistics at cut-off `k`.
pub fn bias_slices(alerts: &[ScoredAlert], demographics: &[Demographics], k: usize) -> Result<Vec<BiasRow>, EvalError> {
    if alerts.len() != demographics.len() {
        return Err(EvalError::LengthMismatch(alerts.len(), demographics.len()));
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let k_used = k.min(alerts.len());
    let mut in_top = vec![false; alerts.len()];
    for i in rank_order(alerts).into_iter().take(k_used) {
        in_top[i] = true;
    }
    let mut rows = Vec::new();
    type GroupOf = fn(&Demographics) -> &'static str;
    let attributes: [(&str, GroupOf); 2] = [("gender", |d| d.gender.as_str()), ("age_band", |d| d.age_band.as_str())];
    for (attr, key) in attributes {
        let mut groups: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
        for (i, d) in demographics.iter().enumerate() {
            let e = groups.entry(key(d)).or_default();
            e.0 += 1;
            if in_top[i] {
                e.1 += 1;
                if alerts[i].label == Positive::Yes {
                    e.2 += 1;
                }
            }
        }
        for (group, (pool, top, found)) in groups {
            if pool < MIN_GROUP_SIZE {
                rows.push(BiasRow {
                    attribute: attr.to_string(),
                    group: group.to_string(),
                    suppressed: true,
                    pool_count: None,
                    selection_rate: None,
                    found_rate: None,
                    representation_ratio: None,
                });
                continue;
            }
            let pool_share = pool as f64 / alerts.len() as f64;
            rows.push(BiasRow {
                attribute: attr.to_string(),
                group: group.to_string(),
                suppressed: false,
                pool_count: Some(pool),
                selection_rate: ratio(top, pool),
                found_rate: ratio(found, top),
                representation_ratio: ratio(top, k_used).map(|s| s / pool_share),
            });
        }
    }
    Ok(rows)
}
