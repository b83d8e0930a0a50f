use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Datelike, NaiveTime, Timelike, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geo::hotspot_flags;
use super::history::HistoryIndex;
use super::weather::{weather_daily, WeatherTable, WEATHER_COLUMNS};
use super::{FeatureConfig, FeatureError, FeatureWindows};
use crate::artifact;
use crate::domain::io::Corpus;
use crate::domain::{AgeBand, Alert, Gender, Hotspot, OutcomeRecord, Platform as Source};
use crate::matrix::{Column, FeatureGroup, FeatureMatrix, FeatureSchema};
use crate::textmine::{
    extract_entities, lda_fit, word_count, Gazetteers, LdaConfig, LdaModel, ManualTopics, Tokenizer,
};

const FEATURIZER_MAGIC: &[u8; 8] = b"SRFEAT\0\0";
const FEATURIZER_VERSION: u32 = 1;
const TEXT_FIELDS: [&str; 3] = ["location", "appearance", "concerns"];

fn col(name: impl Into<String>, group: FeatureGroup) -> Column {
    Column { name: name.into(), group }
}

/// Every column except the topic proportions, in matrix order.
pub fn base_columns(w: &FeatureWindows) -> Vec<Column> {
    use FeatureGroup::*;
    let mut c = Vec::new();
    c.extend(Gender::ALL.iter().map(|g| col(format!("gender_{}", g.as_str()), Demographics)));
    c.extend(AgeBand::ALL.iter().map(|a| col(format!("age_{}", a.as_str()), Demographics)));
    c.extend(Source::ALL.iter().map(|p| col(format!("platform_{p:?}"), Platform)));
    for unit in ["doy", "dow", "hod"] {
        c.push(col(format!("{unit}_sin"), DateTime));
        c.push(col(format!("{unit}_cos"), DateTime));
    }
    c.extend(TEXT_FIELDS.iter().map(|f| col(format!("words_{f}"), WordCounts)));
    for f in TEXT_FIELDS {
        c.push(col(format!("sleep_{f}"), ManualTopics));
        c.push(col(format!("beg_{f}"), ManualTopics));
    }
    c.push(col("entities_location", ManualTopics));
    c.push(col("entities_activity", ManualTopics));
    c.push(col("duplicate", Duplicate));

    let m = |x: f64| format!("{}m", x as u64);
    c.extend(w.distances_m.iter().map(|&x| col(format!("hotspot_within_{}", m(x)), SpatialAggregates)));
    for kind in ["alerts", "referrals", "positives"] {
        for &x in &w.distances_m {
            for &y in &w.day_windows {
                c.push(col(format!("{kind}_{}_{y}d", m(x)), SpatialAggregates));
            }
        }
    }
    for p in Source::ALL {
        for &x in &w.distances_m {
            for &y in &w.day_windows {
                c.push(col(format!("alerts_{p:?}_{}_{y}d", m(x)), SpatialAggregates));
            }
        }
    }
    for &y in &w.day_windows {
        for kind in ["alerts", "referrals", "positives"] {
            c.push(col(format!("global_{kind}_{y}d"), TemporalAggregates));
        }
        for p in Source::ALL {
            c.push(col(format!("global_alerts_{p:?}_{y}d"), TemporalAggregates));
        }
    }
    for &y in &w.day_windows {
        for kind in ["response_hours", "alerts", "referrals", "positives", "found_rate", "no_data"] {
            c.push(col(format!("lsp_{kind}_{y}d"), LspStats));
        }
    }
    c.extend(WEATHER_COLUMNS.iter().map(|n| col(*n, Weather)));
    c
}

fn lda_columns(topics: usize) -> Vec<Column> {
    ["location", "activity"]
        .iter()
        .flat_map(|kind| (0..topics).map(move |k| col(format!("lda_{kind}_{k}"), FeatureGroup::LdaTopics)))
        .collect()
}

fn cyc(p: f64) -> [f64; 2] {
    let a = std::f64::consts::TAU * p;
    [a.sin(), a.cos()]
}

/// `(sin, cos)` pairs for the day of the year, the day of the week and the hour of the day.
pub fn datetime_cyclical(ts: DateTime<Utc>) -> [f64; 6] {
    let year_len = if ts.date_naive().leap_year() { 366.0 } else { 365.0 };
    let doy = cyc(ts.ordinal0() as f64 / year_len);
    let dow = cyc(ts.weekday().num_days_from_monday() as f64 / 7.0);
    let hod = cyc(ts.hour() as f64 / 24.0);
    [doy[0], doy[1], dow[0], dow[1], hod[0], hod[1]]
}

/// Fold-independent features of one alert.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseRow {
    /// Imputable LSP cells hold NaN when the provider had no referrals in the window.
    pub values: Vec<f64>,
    pub location_doc: Vec<String>,
    pub activity_doc: Vec<String>,
    /// Latest timestamp of any information that fed the row.
    pub provenance: DateTime<Utc>,
}

/// Everything needed to compute features for an alert as of its creation time.
pub struct FeatureContext {
    config: FeatureConfig,
    columns: Vec<Column>,
    history: HistoryIndex,
    weather: WeatherTable,
    hotspots: Vec<Hotspot>,
    tokenizer: Tokenizer,
    gazetteers: Gazetteers,
    topics: ManualTopics,
}

impl FeatureContext {
    pub fn new(corpus: &Corpus, config: FeatureConfig) -> Result<Self, FeatureError> {
        Self::from_parts(&corpus.alerts, &corpus.outcomes, &corpus.hotspots, &corpus.weather, config)
    }

    pub fn from_parts(
        alerts: &[Alert],
        outcomes: &[OutcomeRecord],
        hotspots: &[Hotspot],
        weather: &[crate::domain::WeatherHour],
        config: FeatureConfig,
    ) -> Result<Self, FeatureError> {
        config.validate()?;
        let weather = WeatherTable::new(weather)?;
        let pos: HashMap<&str, usize> = alerts.iter().enumerate().map(|(i, a)| (a.id.as_str(), i)).collect();
        let mut first: Vec<Option<&OutcomeRecord>> = vec![None; alerts.len()];
        for o in outcomes {
            let &i = pos.get(o.alert_id.as_str()).ok_or_else(|| FeatureError::UnknownAlert(o.alert_id.clone()))?;
            if first[i].is_none_or(|prev| o.resolved_at < prev.resolved_at) {
                first[i] = Some(o);
            }
        }
        let history =
            HistoryIndex::new(alerts, &first, &config.windows, config.duplicate_m, config.duplicate_days as i64);
        Ok(Self {
            columns: base_columns(&config.windows),
            config,
            history,
            weather,
            hotspots: hotspots.to_vec(),
            tokenizer: Tokenizer::default(),
            gazetteers: Gazetteers::builtin(),
            topics: ManualTopics::builtin(),
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn history(&self) -> &HistoryIndex {
        &self.history
    }

    /// Features of `alert` using only information available before its creation.
    pub fn base_row(&self, alert: &Alert) -> Result<BaseRow, FeatureError> {
        let w = &self.config.windows;
        let t = alert.created_at;
        let mut v = Vec::with_capacity(self.columns.len());
        let mut latest = t;
        let mut seen = |ts: Option<i64>| {
            if let Some(s) = ts.and_then(|s| DateTime::from_timestamp(s, 0)) {
                latest = latest.max(s);
            }
        };

        v.extend(Gender::ALL.iter().map(|&g| f64::from(u8::from(alert.gender == g))));
        v.extend(AgeBand::ALL.iter().map(|&a| f64::from(u8::from(alert.age_band == a))));
        v.extend(Source::ALL.iter().map(|&p| f64::from(u8::from(alert.platform == p))));
        v.extend(datetime_cyclical(t));

        let texts = alert.texts();
        v.extend(texts.iter().map(|&s| word_count(s) as f64));
        let tokens: Vec<Vec<String>> =
            texts.iter().map(|s| s.map_or_else(Vec::new, |s| self.tokenizer.tokenize(s))).collect();
        for tk in &tokens {
            let c = self.topics.counts(tk);
            v.push(c.sleep as f64);
            v.push(c.beg as f64);
        }
        let all_tokens: Vec<&String> = tokens.iter().flatten().collect();
        let entities = extract_entities(&all_tokens, &self.gazetteers);
        v.push(entities.location_count() as f64);
        v.push(entities.activity_count() as f64);

        let spatial = self.history.spatial(alert.latitude, alert.longitude, t);
        seen(spatial.latest);
        v.push(f64::from(u8::from(spatial.duplicate)));
        v.extend(hotspot_flags(alert.point(), &self.hotspots, &w.distances_m));
        for grid in
            [&spatial.alerts, &spatial.referrals, &spatial.positives].into_iter().chain(spatial.by_platform.iter())
        {
            for row in grid {
                v.extend(row.iter().map(|&n| n as f64));
            }
        }

        for &y in &w.day_windows {
            let g = self.history.global(t, y);
            seen(self.history.global_latest(t, y));
            v.extend([g.alerts, g.referrals, g.positives].map(|n| n as f64));
            v.extend(g.by_platform.map(|n| n as f64));
        }

        for &y in &w.day_windows {
            let (lw, lsp_latest) = match self.history.lsp(&alert.lsp_id, t, y) {
                Some((lw, l)) => (Some(lw), l),
                None => (None, None),
            };
            seen(lsp_latest);
            let (alerts, referrals, positives, secs) =
                lw.map_or((0, 0, 0, 0), |l| (l.alerts, l.referrals, l.positives, l.response_secs));
            if referrals == 0 {
                v.extend([f64::NAN, alerts as f64, 0.0, positives as f64, f64::NAN, 1.0]);
            } else {
                let r = referrals as f64;
                v.extend([secs as f64 / 3600.0 / r, alerts as f64, r, positives as f64, positives as f64 / r, 0.0]);
            }
        }

        let day = self.weather.lookup(t.date_naive())?;
        v.extend(weather_daily(&self.weather, t.date_naive())?);
        // the day's aggregate is treated as available from the start of that day
        latest = latest.max(day.date.and_time(NaiveTime::MIN).and_utc());

        debug_assert_eq!(v.len(), self.columns.len());
        Ok(BaseRow {
            values: v,
            location_doc: entity_doc(&entities.location),
            activity_doc: entity_doc(&entities.activity),
            provenance: latest,
        })
    }

    /// Base features for many alerts, computed in parallel with stable row order.
    pub fn compute(&self, alerts: &[Alert]) -> Result<BaseFeatures, FeatureError> {
        let rows: Vec<BaseRow> = alerts.par_iter().map(|a| self.base_row(a)).collect::<Result<_, _>>()?;
        Ok(BaseFeatures::from_rows(self.columns.clone(), alerts, rows))
    }
}

fn entity_doc(counts: &std::collections::BTreeMap<String, usize>) -> Vec<String> {
    counts.iter().flat_map(|(t, &n)| std::iter::repeat_n(t.clone(), n)).collect()
}

/// Fold-independent features for a set of alerts.
#[derive(Debug, Clone)]
pub struct BaseFeatures {
    columns: Vec<Column>,
    alert_ids: Vec<String>,
    created_at: Vec<DateTime<Utc>>,
    rows: Vec<BaseRow>,
}

impl BaseFeatures {
    pub fn from_rows(columns: Vec<Column>, alerts: &[Alert], rows: Vec<BaseRow>) -> Self {
        Self {
            columns,
            alert_ids: alerts.iter().map(|a| a.id.clone()).collect(),
            created_at: alerts.iter().map(|a| a.created_at).collect(),
            rows,
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn alert_ids(&self) -> &[String] {
        &self.alert_ids
    }

    pub fn created_at(&self, i: usize) -> DateTime<Utc> {
        self.created_at[i]
    }

    pub fn row(&self, i: usize) -> &BaseRow {
        &self.rows[i]
    }

    pub fn provenance(&self, i: usize) -> DateTime<Utc> {
        self.rows[i].provenance
    }

    pub fn value(&self, i: usize, name: &str) -> Option<f64> {
        let j = self.columns.iter().position(|c| c.name == name)?;
        Some(self.rows[i].values[j])
    }
}

/// Global fallbacks for LSP windows without referrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputationPriors {
    pub found_rate: f64,
    pub response_hours: f64,
}

impl ImputationPriors {
    /// Found rate and mean response time over referrals among `rows` resolved by `cutoff`.
    /// Both are 0 when there are no such referrals.
    pub fn from_training(alerts: &[Alert], outcomes: &[OutcomeRecord], rows: &[usize], cutoff: DateTime<Utc>) -> Self {
        let ids: std::collections::HashSet<&str> = rows.iter().map(|&i| alerts[i].id.as_str()).collect();
        let created: HashMap<&str, DateTime<Utc>> =
            rows.iter().map(|&i| (alerts[i].id.as_str(), alerts[i].created_at)).collect();
        let mut first: HashMap<&str, &OutcomeRecord> = HashMap::new();
        for o in outcomes.iter().filter(|o| ids.contains(o.alert_id.as_str())) {
            let e = first.entry(o.alert_id.as_str()).or_insert(o);
            if o.resolved_at < e.resolved_at {
                *e = o;
            }
        }
        let (mut n, mut found, mut hours) = (0usize, 0usize, 0.0);
        let mut keys: Vec<&&str> = first.keys().collect();
        keys.sort();
        for k in keys {
            let o = first[*k];
            if o.resolved_at > cutoff || !o.outcome_code.labels().referral {
                continue;
            }
            n += 1;
            found += usize::from(o.outcome_code == crate::domain::OutcomeCode::PersonFound);
            hours += (o.resolved_at - created[*k]).num_seconds() as f64 / 3600.0;
        }
        if n == 0 {
            return Self { found_rate: 0.0, response_hours: 0.0 };
        }
        Self { found_rate: found as f64 / n as f64, response_hours: hours / n as f64 }
    }
}

/// Per-fold transform: imputation priors and topic models fitted on training rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedFeaturizer {
    config: FeatureConfig,
    priors: ImputationPriors,
    location_lda: Option<LdaModel>,
    activity_lda: Option<LdaModel>,
    schema: FeatureSchema,
    /// Base column index for each kept base column, in output order.
    keep: Vec<usize>,
    /// Base columns that fall back to the found-rate or response-time prior.
    found_rate_cols: Vec<usize>,
    response_cols: Vec<usize>,
}

impl FittedFeaturizer {
    pub fn fit(
        config: &FeatureConfig,
        base: &BaseFeatures,
        train_rows: &[usize],
        priors: ImputationPriors,
    ) -> Result<Self, FeatureError> {
        config.validate()?;
        let cols = base.columns();
        let keep: Vec<usize> = (0..cols.len()).filter(|&j| config.groups.contains(&cols[j].group)).collect();
        let with_topics = config.groups.contains(&FeatureGroup::LdaTopics);
        let mut out: Vec<Column> = keep.iter().map(|&j| cols[j].clone()).collect();
        let (mut location_lda, mut activity_lda) = (None, None);
        if with_topics {
            out.extend(lda_columns(config.lda.topics));
            let sample = subsample(train_rows, config.lda.max_docs, config.lda.seed);
            let fit = |doc: fn(&BaseRow) -> &Vec<String>, salt: u64| -> Option<LdaModel> {
                let docs: Vec<&Vec<String>> =
                    sample.iter().map(|&i| doc(base.row(i))).filter(|d| !d.is_empty()).collect();
                let docs: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
                let lda = LdaConfig {
                    topics: config.lda.topics,
                    alpha: None,
                    beta: 0.01,
                    sweeps: config.lda.sweeps,
                    infer_sweeps: config.lda.infer_sweeps,
                    seed: config.lda.seed.wrapping_add(salt),
                };
                // too little text to fit leaves the topic columns at the uniform prior
                lda_fit(&docs, lda).ok()
            };
            location_lda = fit(|r| &r.location_doc, 0);
            activity_lda = fit(|r| &r.activity_doc, 1);
        }
        let pick = |kind: &str| -> Vec<usize> {
            cols.iter()
                .enumerate()
                .filter(|(_, c)| c.group == FeatureGroup::LspStats && c.name.starts_with(&format!("lsp_{kind}_")))
                .map(|(j, _)| j)
                .collect()
        };
        Ok(Self {
            config: config.clone(),
            priors,
            location_lda,
            activity_lda,
            schema: FeatureSchema::new(out)?,
            found_rate_cols: pick("found_rate"),
            response_cols: pick("response_hours"),
            keep,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn priors(&self) -> ImputationPriors {
        self.priors
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    fn with_topics(&self) -> bool {
        self.config.groups.contains(&FeatureGroup::LdaTopics)
    }

    fn topic_props(model: &Option<LdaModel>, topics: usize, doc: &[String]) -> Vec<f64> {
        match model {
            Some(m) => m.infer(doc),
            None => vec![1.0 / topics as f64; topics],
        }
    }

    fn imputed(&self, row: &BaseRow) -> Vec<f64> {
        let mut v = row.values.clone();
        for &j in &self.found_rate_cols {
            if v[j].is_nan() {
                v[j] = self.priors.found_rate;
            }
        }
        for &j in &self.response_cols {
            if v[j].is_nan() {
                v[j] = self.priors.response_hours;
            }
        }
        v
    }

    /// One output row.
    pub fn transform_row(&self, row: &BaseRow) -> Vec<f64> {
        let v = self.imputed(row);
        let mut out: Vec<f64> = self.keep.iter().map(|&j| v[j]).collect();
        if self.with_topics() {
            let k = self.config.lda.topics;
            out.extend(Self::topic_props(&self.location_lda, k, &row.location_doc));
            out.extend(Self::topic_props(&self.activity_lda, k, &row.activity_doc));
        }
        out
    }

    /// Output matrix for the given base rows, in the given order.
    pub fn transform(&self, base: &BaseFeatures, rows: &[usize]) -> Result<FeatureMatrix, FeatureError> {
        let k = self.config.lda.topics;
        // topic inference is memoised per distinct entity document
        let infer_all =
            |model: &Option<LdaModel>, doc: fn(&BaseRow) -> &Vec<String>| -> HashMap<Vec<String>, Vec<f64>> {
                if !self.with_topics() {
                    return HashMap::new();
                }
                let mut distinct: Vec<&Vec<String>> = rows.iter().map(|&i| doc(base.row(i))).collect();
                distinct.sort();
                distinct.dedup();
                distinct.par_iter().map(|d| ((*d).clone(), Self::topic_props(model, k, d))).collect()
            };
        let loc = infer_all(&self.location_lda, |r| &r.location_doc);
        let act = infer_all(&self.activity_lda, |r| &r.activity_doc);
        let mut values = Vec::with_capacity(rows.len() * self.schema.len());
        for &i in rows {
            let r = base.row(i);
            let v = self.imputed(r);
            values.extend(self.keep.iter().map(|&j| v[j]));
            if self.with_topics() {
                values.extend_from_slice(&loc[&r.location_doc]);
                values.extend_from_slice(&act[&r.activity_doc]);
            }
        }
        let ids = rows.iter().map(|&i| base.alert_ids()[i].clone()).collect();
        Ok(FeatureMatrix::new(Arc::new(self.schema.clone()), ids, values)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, FeatureError> {
        Ok(artifact::encode(FEATURIZER_MAGIC, FEATURIZER_VERSION, self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        Ok(artifact::decode(FEATURIZER_MAGIC, FEATURIZER_VERSION, bytes)?)
    }
}

fn subsample(rows: &[usize], max: usize, seed: u64) -> Vec<usize> {
    if rows.len() <= max {
        return rows.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, rows.len(), max).into_iter().map(|p| rows[p]).collect();
    picked.sort_unstable();
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn column_count_and_uniqueness() {
        let cols = base_columns(&FeatureWindows::default());
        assert_eq!(cols.len(), 263);
        let mut all = cols.clone();
        all.extend(lda_columns(10));
        assert_eq!(FeatureSchema::new(all).unwrap().len(), 283);
    }

    #[test]
    fn cyclical_positions() {
        // 2018-01-01 is a Monday
        let v = datetime_cyclical(Utc.with_ymd_and_hms(2018, 1, 1, 0, 0, 0).unwrap());
        for (s, c) in [(v[0], v[1]), (v[2], v[3]), (v[4], v[5])] {
            assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        }
        let six = datetime_cyclical(Utc.with_ymd_and_hms(2018, 1, 1, 6, 0, 0).unwrap());
        assert!((six[4] - 1.0).abs() < 1e-12 && six[5].abs() < 1e-12);
    }

    #[test]
    fn year_boundary_is_adjacent() {
        let dist = |a: [f64; 6], b: [f64; 6]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let late = datetime_cyclical(Utc.with_ymd_and_hms(2018, 12, 31, 23, 0, 0).unwrap());
        let early = datetime_cyclical(Utc.with_ymd_and_hms(2019, 1, 1, 1, 0, 0).unwrap());
        let summer = datetime_cyclical(Utc.with_ymd_and_hms(2019, 7, 1, 0, 0, 0).unwrap());
        let jan = datetime_cyclical(Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap());
        assert!(dist(late, early) < dist(jan, summer));
    }
}
