//! Seeded synthetic corpus with a hidden per-alert success probability.

mod baseline;
mod text;
mod weather;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, Months, NaiveDate, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::sha256_hex;
use crate::domain::io::{Corpus, CsvError, ALERTS_FILE, HOTSPOTS_FILE, OUTCOMES_FILE, WEATHER_FILE};
use crate::domain::{AgeBand, Alert, BoundingBox, Gender, GeoPoint, Hotspot, OutcomeCode, OutcomeRecord, Platform};
use crate::featurize::haversine_m;

pub use baseline::{manual_baselines, monthly_alert_counts, simulate_manual_baseline, FOUND_WITHIN_DAYS};
pub use text::{AlertText, TextPlan, TextPools};
pub use weather::{generate_weather, DayState};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATENT_FILE: &str = "hidden/latent_quality.csv";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator configuration: {0}")]
    Config(String),
    #[error("region bounding box is empty")]
    EmptyRegion,
    #[error("monthly volume {0} is not feasible")]
    Infeasible(f64),
    #[error("no alerts in month {0}")]
    EmptyMonth(NaiveDate),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Inclusive.
    pub end_date: NaiveDate,
    pub base_monthly_volume: u64,
    /// Fractional growth per month.
    pub growth_rate: f64,
    pub seasonal_amplitude: f64,
    pub region: BoundingBox,
    pub n_hotspots: usize,
    pub n_lsps: usize,
    pub duplicate_rate: f64,
    pub signal_strength: f64,
    /// Daily referral capacity as a share of the expected daily volume.
    pub referral_share: f64,
    /// Log-odds of success for an average alert.
    pub base_logit: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            start_date: NaiveDate::from_ymd_opt(2017, 12, 1).expect("valid date"),
            end_date: NaiveDate::from_ymd_opt(2019, 2, 28).expect("valid date"),
            base_monthly_volume: 2500,
            growth_rate: 0.03,
            seasonal_amplitude: 0.35,
            region: BoundingBox { min_lat: 51.30, max_lat: 51.68, min_lon: -0.48, max_lon: 0.28 },
            n_hotspots: 40,
            n_lsps: 12,
            duplicate_rate: 0.06,
            signal_strength: 1.0,
            referral_share: 0.4,
            base_logit: -3.8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.start_date >= self.end_date {
            return bad("start_date must precede end_date");
        }
        if self.region.is_empty() {
            return Err(GenError::EmptyRegion);
        }
        for (name, v) in [
            ("seasonal_amplitude", self.seasonal_amplitude),
            ("duplicate_rate", self.duplicate_rate),
            ("signal_strength", self.signal_strength),
            ("referral_share", self.referral_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !self.growth_rate.is_finite() || self.growth_rate <= -1.0 {
            return bad("growth_rate must be finite and > -1");
        }
        if !self.base_logit.is_finite() {
            return bad("base_logit must be finite");
        }
        if self.n_lsps == 0 {
            return bad("n_lsps must be >= 1");
        }
        Ok(())
    }
}

/// Hidden probability that outreach finds the person. Never part of the corpus files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentQuality {
    pub alert_id: String,
    pub q: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub config: GeneratorConfig,
    pub data: Corpus,
    pub latent: Vec<LatentQuality>,
    /// `(duplicate id, source id)` for every injected re-emission.
    pub duplicates: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: GeneratorConfig,
    pub alerts: usize,
    pub outcomes: usize,
    pub hotspots: usize,
    pub weather_hours: usize,
    pub monthly_alerts: BTreeMap<String, usize>,
    /// SHA-256 of each written table.
    pub files: BTreeMap<String, String>,
}

impl SyntheticCorpus {
    /// Writes the four tables and the manifest; the latent qualities go to a separate `hidden/` file.
    pub fn write_dir(&self, dir: &Path) -> Result<Manifest, GenError> {
        self.data.write_dir(dir)?;
        let io = |path: &Path, source| GenError::Io { path: path.display().to_string(), source };
        let mut files = BTreeMap::new();
        for name in [ALERTS_FILE, OUTCOMES_FILE, HOTSPOTS_FILE, WEATHER_FILE] {
            let p = dir.join(name);
            let bytes = std::fs::read(&p).map_err(|e| io(&p, e))?;
            files.insert(name.to_string(), sha256_hex(&bytes));
        }
        let manifest = Manifest {
            config: self.config.clone(),
            alerts: self.data.alerts.len(),
            outcomes: self.data.outcomes.len(),
            hotspots: self.data.hotspots.len(),
            weather_hours: self.data.weather.len(),
            monthly_alerts: monthly_alert_counts(&self.data.alerts)
                .into_iter()
                .map(|(m, n)| (m.format("%Y-%m").to_string(), n))
                .collect(),
            files,
        };
        let p = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
        std::fs::write(&p, json + "\n").map_err(|e| io(&p, e))?;

        let p = dir.join(LATENT_FILE);
        std::fs::create_dir_all(p.parent().expect("has parent")).map_err(|e| io(&p, e))?;
        let mut wtr = csv::Writer::from_path(&p).map_err(|e| GenError::Csv(e.into()))?;
        for l in &self.latent {
            wtr.serialize(l).map_err(|e| GenError::Csv(e.into()))?;
        }
        wtr.flush().map_err(|e| io(&p, e))?;
        Ok(manifest)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Raised cosine peaking in mid-January.
fn winter_bump(d: NaiveDate) -> f64 {
    0.5 * (1.0 + (std::f64::consts::TAU * (d.ordinal0() as f64 - 14.0) / 365.25).cos())
}

fn month_start(d: NaiveDate) -> NaiveDate {
    d.with_day(1).expect("day 1 exists")
}

fn days_in_month(m: NaiveDate) -> i64 {
    (m + Months::new(1) - m).num_days()
}

/// Destination `metres` away from `p` along `bearing` radians (flat approximation; sub-metre error at this scale).
fn displace(p: GeoPoint, metres: f64, bearing: f64) -> GeoPoint {
    let dlat = (metres * bearing.cos() / 6_371_000.0).to_degrees();
    let dlon = (metres * bearing.sin() / (6_371_000.0 * p.latitude.to_radians().cos())).to_degrees();
    GeoPoint::new(p.latitude + dlat, p.longitude + dlon)
}

struct Lsp {
    id: String,
    logit_offset: f64,
    response_hours: f64,
}

struct Draft {
    created_at: DateTime<Utc>,
    point: GeoPoint,
    platform: Platform,
    gender: Gender,
    age_band: AgeBand,
    text: AlertText,
    plan: TextPlan,
    duplicate_of: Option<usize>,
}

const HOUR_WEIGHTS: [u32; 24] = [2, 1, 1, 1, 1, 2, 3, 5, 6, 5, 4, 4, 4, 4, 4, 4, 5, 6, 7, 7, 6, 5, 4, 3];
const PLATFORM_WEIGHTS: [u32; 3] = [30, 45, 25];
const GENDER_WEIGHTS: [u32; 4] = [68, 17, 10, 5];
const AGE_WEIGHTS: [u32; 7] = [2, 15, 35, 25, 5, 13, 5];

pub fn generate_corpus(config: &GeneratorConfig) -> Result<SyntheticCorpus, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    let region = config.region;

    let (weather_hours, days) = generate_weather(&mut rng, config.start_date, config.end_date);
    let day_state: HashMap<NaiveDate, DayState> = days.iter().map(|d| (d.date, *d)).collect();

    let uniform_point = |rng: &mut ChaCha8Rng| {
        GeoPoint::new(
            rng.random_range(region.min_lat..region.max_lat),
            rng.random_range(region.min_lon..region.max_lon),
        )
    };
    let around = |rng: &mut ChaCha8Rng, c: GeoPoint, sigma_m: f64| loop {
        let p = displace(c, (sigma_m * normal.sample(rng)).abs(), rng.random_range(0.0..std::f64::consts::TAU));
        if region.contains(p.latitude, p.longitude) {
            break p;
        }
    };
    let centres: Vec<GeoPoint> = (0..6).map(|_| uniform_point(&mut rng)).collect();
    let hotspots: Vec<Hotspot> = (0..config.n_hotspots)
        .map(|i| {
            let p = if rng.random_bool(0.7) {
                let c = *centres.choose(&mut rng).expect("centres");
                around(&mut rng, c, 2000.0)
            } else {
                uniform_point(&mut rng)
            };
            Hotspot {
                latitude: round6(p.latitude),
                longitude: round6(p.longitude),
                label: format!("hotspot-{:02}", i + 1),
            }
        })
        .collect();

    let lsp_cols = (config.n_lsps as f64).sqrt().ceil() as usize;
    let lsp_rows = config.n_lsps.div_ceil(lsp_cols);
    let lsps: Vec<Lsp> = (0..config.n_lsps)
        .map(|i| Lsp {
            id: format!("LSP{:02}", i + 1),
            logit_offset: 0.35 * normal.sample(&mut rng),
            response_hours: rng.random_range(12.0..60.0),
        })
        .collect();
    let lsp_of = |p: GeoPoint| {
        let fy = (p.latitude - region.min_lat) / (region.max_lat - region.min_lat);
        let fx = (p.longitude - region.min_lon) / (region.max_lon - region.min_lon);
        let r = ((fy * lsp_rows as f64) as usize).min(lsp_rows - 1);
        let c = ((fx * lsp_cols as f64) as usize).min(lsp_cols - 1);
        (r * lsp_cols + c).min(config.n_lsps - 1)
    };

    // monthly volumes and creation instants
    let hour_dist = WeightedIndex::new(HOUR_WEIGHTS).expect("weights");
    let mut times: Vec<DateTime<Utc>> = Vec::new();
    let mut expected_daily: HashMap<NaiveDate, f64> = HashMap::new();
    let mut month = month_start(config.start_date);
    let mut t = 0;
    while month <= config.end_date {
        let next = month + Months::new(1);
        let first = month.max(config.start_date);
        let last = (next - Duration::days(1)).min(config.end_date);
        let covered = (last - first).num_days() + 1;
        let mid = month + Duration::days(14);
        let full_mean = config.base_monthly_volume as f64
            * (1.0 + config.growth_rate).powi(t)
            * (1.0 + config.seasonal_amplitude * winter_bump(mid));
        let mean = full_mean * covered as f64 / days_in_month(month) as f64;
        if !mean.is_finite() || mean > 1e7 {
            return Err(GenError::Infeasible(mean));
        }
        let n = if mean > 0.0 { Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize } else { 0 };
        for d in 0..covered {
            expected_daily.insert(first + Duration::days(d), full_mean / days_in_month(month) as f64);
        }
        for _ in 0..n {
            let day = first + Duration::days(rng.random_range(0..covered));
            let secs = hour_dist.sample(&mut rng) as i64 * 3600 + rng.random_range(0..3600);
            times.push(day.and_hms_opt(0, 0, 0).expect("midnight").and_utc() + Duration::seconds(secs));
        }
        month = next;
        t += 1;
    }
    times.sort();

    // alerts, with duplicates re-emitted from recent alerts
    let pools = TextPools::builtin();
    let platform_dist = WeightedIndex::new(PLATFORM_WEIGHTS).expect("weights");
    let gender_dist = WeightedIndex::new(GENDER_WEIGHTS).expect("weights");
    let age_dist = WeightedIndex::new(AGE_WEIGHTS).expect("weights");
    let dup_window = Duration::days(7) - Duration::hours(1);
    let mut drafts: Vec<Draft> = Vec::with_capacity(times.len());
    let mut recent: VecDeque<usize> = VecDeque::new();
    for &created_at in &times {
        while recent.front().is_some_and(|&i| drafts[i].created_at < created_at - dup_window) {
            recent.pop_front();
        }
        let candidates: Vec<usize> = recent.iter().copied().filter(|&i| drafts[i].created_at < created_at).collect();
        let platform = Platform::ALL[platform_dist.sample(&mut rng)];
        if !candidates.is_empty() && rng.random_bool(config.duplicate_rate) {
            let src = *candidates.choose(&mut rng).expect("non-empty");
            let s = &drafts[src];
            let p = around(&mut rng, s.point, 150.0);
            let point = GeoPoint::new(round6(p.latitude), round6(p.longitude));
            if haversine_m(point, s.point) <= 450.0 {
                let draft = Draft {
                    created_at,
                    point,
                    platform,
                    gender: s.gender,
                    age_band: s.age_band,
                    text: s.text.clone(),
                    plan: s.plan,
                    duplicate_of: Some(src),
                };
                recent.push_back(drafts.len());
                drafts.push(draft);
                continue;
            }
        }
        let u: f64 = rng.random();
        let point = if u < 0.35 && !hotspots.is_empty() {
            let h = hotspots.choose(&mut rng).expect("non-empty");
            around(&mut rng, GeoPoint::new(h.latitude, h.longitude), 120.0)
        } else if u < 0.8 {
            let c = *centres.choose(&mut rng).expect("centres");
            around(&mut rng, c, 2500.0)
        } else {
            uniform_point(&mut rng)
        };
        let a: f64 = Gamma::new(2.0, 1.0).expect("valid").sample(&mut rng);
        let b: f64 = Gamma::new(2.0, 1.0).expect("valid").sample(&mut rng);
        let plan = TextPlan { detail: a / (a + b), sleeping: rng.random_bool(0.55), begging: rng.random_bool(0.3) };
        let text = pools.write(&mut rng, plan);
        recent.push_back(drafts.len());
        drafts.push(Draft {
            created_at,
            point: GeoPoint::new(round6(point.latitude), round6(point.longitude)),
            platform,
            gender: Gender::ALL[gender_dist.sample(&mut rng)],
            age_band: AgeBand::ALL[age_dist.sample(&mut rng)],
            text,
            plan,
            duplicate_of: None,
        });
    }

    let width = drafts.len().to_string().len().max(6);
    let ids: Vec<String> = (0..drafts.len()).map(|i| format!("A{:0width$}", i + 1)).collect();

    // hidden quality and the manual review policy
    let mut latent = Vec::with_capacity(drafts.len());
    let mut heuristic = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.iter().enumerate() {
        let words = d.text.word_count() as f64;
        let near_hotspot =
            hotspots.iter().any(|h| haversine_m(d.point, GeoPoint::new(h.latitude, h.longitude)) <= 250.0);
        let dup = d.duplicate_of.is_some();
        let sev = day_state[&d.created_at.date_naive()].severity();
        let lsp = &lsps[lsp_of(d.point)];
        let signal = 1.7 * (words - 14.0) / 7.0 + 0.8 * f64::from(u8::from(d.plan.sleeping)) + 1.0 * sev
            - 0.7 * f64::from(u8::from(near_hotspot))
            - 0.6 * f64::from(u8::from(dup))
            + lsp.logit_offset;
        let q = sigmoid(config.base_logit + config.signal_strength * signal);
        latent.push(LatentQuality { alert_id: ids[i].clone(), q });
        let has_location = d.text.location.is_some();
        let h = 0.12 * words + f64::from(u8::from(d.plan.sleeping)) + 0.4 * f64::from(u8::from(has_location))
            - 1.5 * f64::from(u8::from(near_hotspot))
            - 2.5 * f64::from(u8::from(dup))
            + 0.7 * normal.sample(&mut rng);
        heuristic.push((h, near_hotspot, dup, words));
    }
    let mut referred = vec![false; drafts.len()];
    let mut by_day: BTreeMap<NaiveDate, Vec<usize>> = BTreeMap::new();
    for (i, d) in drafts.iter().enumerate() {
        by_day.entry(d.created_at.date_naive()).or_default().push(i);
    }
    for (day, mut idx) in by_day {
        let capacity = (config.referral_share * expected_daily.get(&day).copied().unwrap_or(0.0)).round() as usize;
        idx.sort_by(|&a, &b| heuristic[b].0.total_cmp(&heuristic[a].0).then(a.cmp(&b)));
        for &i in idx.iter().take(capacity) {
            if heuristic[i].0 > 0.5 {
                referred[i] = true;
            }
        }
    }

    // outcomes
    let mut outcomes = Vec::with_capacity(drafts.len());
    let hours = |h: f64| Duration::seconds((h * 3600.0).round() as i64);
    for (i, d) in drafts.iter().enumerate() {
        let lsp = &lsps[lsp_of(d.point)];
        let (_, near_hotspot, dup, words) = heuristic[i];
        let (code, delay) = if referred[i] {
            let u: f64 = rng.random();
            if u < 0.06 {
                (OutcomeCode::LspDidNotRespond, rng.random_range(240.0..336.0))
            } else if u < 0.08 {
                (OutcomeCode::ReferredOutOfArea, rng.random_range(24.0..120.0))
            } else if u < 0.11 {
                (OutcomeCode::StillOpen, rng.random_range(24.0..336.0))
            } else if rng.random_bool(latent[i].q) {
                let delay = if rng.random_bool(0.05) {
                    rng.random_range(180.0..480.0)
                } else {
                    Gamma::new(2.0, lsp.response_hours / 2.0).expect("valid").sample(&mut rng).clamp(1.0, 165.0)
                };
                (OutcomeCode::PersonFound, delay)
            } else {
                let code =
                    if rng.random_bool(0.15) { OutcomeCode::PersonRefusedService } else { OutcomeCode::PersonNotFound };
                (code, Gamma::new(2.0, lsp.response_hours * 0.65).expect("valid").sample(&mut rng).clamp(1.0, 312.0))
            }
        } else {
            let code = if dup {
                OutcomeCode::DuplicateAlert
            } else if near_hotspot {
                OutcomeCode::KnownHotspotNoAction
            } else if words < 8.0 {
                OutcomeCode::NotEnoughInformation
            } else {
                OutcomeCode::InsufficientResources
            };
            (code, rng.random_range(0.5..48.0))
        };
        outcomes.push(OutcomeRecord {
            alert_id: ids[i].clone(),
            outcome_code: code,
            resolved_at: d.created_at + hours(delay),
        });
    }

    let alerts: Vec<Alert> = drafts
        .iter()
        .enumerate()
        .map(|(i, d)| Alert {
            id: ids[i].clone(),
            created_at: d.created_at,
            time_seen: Some(d.created_at - Duration::minutes((d.created_at.timestamp() % 360) + 5)),
            platform: d.platform,
            latitude: d.point.latitude,
            longitude: d.point.longitude,
            lsp_id: lsps[lsp_of(d.point)].id.clone(),
            gender: d.gender,
            age_band: d.age_band,
            location_text: d.text.location.clone(),
            appearance_text: d.text.appearance.clone(),
            concerns_text: d.text.concerns.clone(),
        })
        .collect();
    let duplicates = drafts
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.duplicate_of.map(|s| (ids[i].clone(), ids[s].clone())))
        .collect();

    Ok(SyntheticCorpus {
        config: config.clone(),
        data: Corpus { alerts, outcomes, hotspots, weather: weather_hours },
        latent,
        duplicates,
    })
}
