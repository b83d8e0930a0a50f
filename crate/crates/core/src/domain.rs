//! Core record types shared by every stage: alerts, outcomes, label mapping,
//! hotspots and weather, plus the validation applied to raw input records.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod io;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("unmapped outcome code `{0}`")]
    UnmappedOutcome(String),
    #[error("unknown {field} value `{value}`")]
    UnknownCategory { field: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Platform {
    Phone,
    Website,
    MobileApp,
}

impl Platform {
    pub const ALL: [Platform; 3] = [Platform::Phone, Platform::Website, Platform::MobileApp];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    /// The reporter could not tell.
    Unknown,
    /// The field was left empty.
    Missing,
}

impl Gender {
    pub const ALL: [Gender; 4] = [Gender::Male, Gender::Female, Gender::Unknown, Gender::Missing];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBand {
    Under18,
    A18to25,
    A26to40,
    A41to60,
    Over60,
    Unknown,
    Missing,
}

impl AgeBand {
    pub const ALL: [AgeBand; 7] = [
        AgeBand::Under18,
        AgeBand::A18to25,
        AgeBand::A26to40,
        AgeBand::A41to60,
        AgeBand::Over60,
        AgeBand::Unknown,
        AgeBand::Missing,
    ];
}

macro_rules! enum_strings {
    ($ty:ty, $field:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $(<$ty>::$variant => $text),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = DomainError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let t = s.trim();
                $(if t.eq_ignore_ascii_case($text) { return Ok(<$ty>::$variant); })+
                Err(DomainError::UnknownCategory { field: $field, value: s.to_string() })
            }
        }
    };
}

enum_strings!(Platform, "platform", {
    Phone => "Phone",
    Website => "Website",
    MobileApp => "MobileApp",
});

enum_strings!(Gender, "gender", {
    Male => "Male",
    Female => "Female",
    Unknown => "Unknown",
    Missing => "Missing",
});

enum_strings!(AgeBand, "age_band", {
    Under18 => "Under18",
    A18to25 => "18-25",
    A26to40 => "26-40",
    A41to60 => "41-60",
    Over60 => "Over60",
    Unknown => "Unknown",
    Missing => "Missing",
});

/// Synthetic outcome vocabulary standing in for the private production codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeCode {
    PersonFound,
    PersonNotFound,
    LspDidNotRespond,
    StillOpen,
    NotEnoughInformation,
    DuplicateAlert,
    KnownHotspotNoAction,
    PersonRefusedService,
    ReferredOutOfArea,
    InsufficientResources,
}

impl OutcomeCode {
    pub const ALL: [OutcomeCode; 10] = [
        OutcomeCode::PersonFound,
        OutcomeCode::PersonNotFound,
        OutcomeCode::LspDidNotRespond,
        OutcomeCode::StillOpen,
        OutcomeCode::NotEnoughInformation,
        OutcomeCode::DuplicateAlert,
        OutcomeCode::KnownHotspotNoAction,
        OutcomeCode::PersonRefusedService,
        OutcomeCode::ReferredOutOfArea,
        OutcomeCode::InsufficientResources,
    ];

    pub fn labels(self) -> LabelPair {
        map_outcome_to_labels(self)
    }
}

impl fmt::Display for OutcomeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for OutcomeCode {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OutcomeCode::ALL
            .into_iter()
            .find(|c| c.to_string() == s.trim())
            .ok_or_else(|| DomainError::UnmappedOutcome(s.to_string()))
    }
}

/// Positive-outcome label. `Null` means the outcome is unknowable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Positive {
    Yes,
    No,
    Null,
}

impl Positive {
    pub fn is_null(self) -> bool {
        self == Positive::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabelPair {
    pub referral: bool,
    pub positive: Positive,
}

pub fn map_outcome_to_labels(code: OutcomeCode) -> LabelPair {
    use OutcomeCode::*;
    let (referral, positive) = match code {
        PersonFound => (true, Positive::Yes),
        PersonNotFound | PersonRefusedService => (true, Positive::No),
        LspDidNotRespond | StillOpen | ReferredOutOfArea => (true, Positive::Null),
        NotEnoughInformation | DuplicateAlert | KnownHotspotNoAction | InsufficientResources => (false, Positive::Null),
    };
    LabelPair { referral, positive }
}

/// Parses a textual outcome code and maps it; unknown codes are an error, never `Null`.
pub fn map_outcome_str(code: &str) -> Result<LabelPair, DomainError> {
    code.parse::<OutcomeCode>().map(map_outcome_to_labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub time_seen: Option<DateTime<Utc>>,
    pub platform: Platform,
    pub latitude: f64,
    pub longitude: f64,
    pub lsp_id: String,
    pub gender: Gender,
    pub age_band: AgeBand,
    pub location_text: Option<String>,
    pub appearance_text: Option<String>,
    pub concerns_text: Option<String>,
}

impl Alert {
    pub fn texts(&self) -> [Option<&str>; 3] {
        [self.location_text.as_deref(), self.appearance_text.as_deref(), self.concerns_text.as_deref()]
    }

    pub fn point(&self) -> GeoPoint {
        GeoPoint::new(self.latitude, self.longitude)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64) -> Self {
        Self { latitude, longitude }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }

    pub fn is_empty(&self) -> bool {
        !(self.min_lat < self.max_lat && self.min_lon < self.max_lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub alert_id: String,
    pub outcome_code: OutcomeCode,
    pub resolved_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hotspot {
    pub latitude: f64,
    pub longitude: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherHour {
    pub timestamp: DateTime<Utc>,
    pub temperature: f64,
    pub wind_speed: f64,
    pub wind_gust: f64,
    pub precip_probability: f64,
    pub snow_accumulation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherDay {
    pub date: NaiveDate,
    pub temp_max: f64,
    pub temp_min: f64,
    pub temp_avg: f64,
    pub precip_prob_max: f64,
    pub precip_prob_min: f64,
    pub snow: bool,
    pub wind_avg: f64,
    pub gust_max: f64,
}

/// Review state of an alert in the live triage flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStatus {
    PendingReview,
    AutoReferred,
    Referred,
    Dismissed,
    OutcomeRecorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Referred,
    Dismissed,
}

impl ReviewStatus {
    pub fn after_decision(self, decision: Decision) -> Option<ReviewStatus> {
        match (self, decision) {
            (ReviewStatus::PendingReview, Decision::Referred) => Some(ReviewStatus::Referred),
            (ReviewStatus::PendingReview, Decision::Dismissed) => Some(ReviewStatus::Dismissed),
            _ => None,
        }
    }

    pub fn after_outcome(self) -> Option<ReviewStatus> {
        match self {
            ReviewStatus::Referred | ReviewStatus::Dismissed | ReviewStatus::AutoReferred => {
                Some(ReviewStatus::OutcomeRecorded)
            }
            _ => None,
        }
    }
}

/// Raw, untyped alert record as it arrives from CSV or an HTTP payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RawAlert {
    pub id: String,
    pub created_at: String,
    pub time_seen: String,
    pub platform: String,
    pub latitude: String,
    pub longitude: String,
    pub lsp_id: String,
    pub gender: String,
    pub age_band: String,
    pub location_text: String,
    pub appearance_text: String,
    pub concerns_text: String,
}

impl From<&Alert> for RawAlert {
    fn from(a: &Alert) -> Self {
        RawAlert {
            id: a.id.clone(),
            created_at: format_ts(a.created_at),
            time_seen: a.time_seen.map(format_ts).unwrap_or_default(),
            platform: a.platform.to_string(),
            latitude: a.latitude.to_string(),
            longitude: a.longitude.to_string(),
            lsp_id: a.lsp_id.clone(),
            gender: a.gender.to_string(),
            age_band: a.age_band.to_string(),
            location_text: a.location_text.clone().unwrap_or_default(),
            appearance_text: a.appearance_text.clone().unwrap_or_default(),
            concerns_text: a.concerns_text.clone().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    MissingId,
    MissingCreatedAt,
    UnparseableTimestamp,
    CoordinateOutOfRange,
    OutsideRegion,
    TimeSeenAfterCreated,
    InvalidCategory,
    MissingLsp,
}

impl RejectReason {
    pub fn message(self) -> &'static str {
        match self {
            RejectReason::MissingId => "missing id",
            RejectReason::MissingCreatedAt => "missing created_at",
            RejectReason::UnparseableTimestamp => "unparseable timestamp",
            RejectReason::CoordinateOutOfRange => "coordinate out of range",
            RejectReason::OutsideRegion => "coordinate outside region",
            RejectReason::TimeSeenAfterCreated => "time_seen after created_at",
            RejectReason::InvalidCategory => "invalid category value",
            RejectReason::MissingLsp => "missing lsp_id",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Error)]
#[error("alert `{id}` rejected: {} ({detail})", reason.message())]
pub struct Rejection {
    pub id: String,
    pub reason: RejectReason,
    pub detail: String,
}

pub fn format_ts(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Accepts RFC 3339 and the naive `YYYY-MM-DD[ T]HH:MM:SS` form (taken as UTC).
pub fn parse_ts(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

fn normalise_text(s: &str) -> Option<String> {
    let t = s.trim();
    if t.is_empty() {
        None
    } else {
        Some(t.to_lowercase())
    }
}

fn parse_category<T: FromStr<Err = DomainError>>(raw: &str, missing: T) -> Result<T, DomainError> {
    if raw.trim().is_empty() {
        Ok(missing)
    } else {
        raw.parse()
    }
}

pub fn validate_alert(raw: &RawAlert) -> Result<Alert, Rejection> {
    validate_alert_in(raw, None)
}

/// Validates and normalises a raw record, optionally requiring it to fall inside `region`.
pub fn validate_alert_in(raw: &RawAlert, region: Option<&BoundingBox>) -> Result<Alert, Rejection> {
    let reject = |reason: RejectReason, detail: String| Rejection { id: raw.id.clone(), reason, detail };
    let id = raw.id.trim();
    if id.is_empty() {
        return Err(reject(RejectReason::MissingId, String::new()));
    }
    if raw.created_at.trim().is_empty() {
        return Err(reject(RejectReason::MissingCreatedAt, String::new()));
    }
    let created_at =
        parse_ts(&raw.created_at).ok_or_else(|| reject(RejectReason::UnparseableTimestamp, raw.created_at.clone()))?;
    let time_seen = match raw.time_seen.trim() {
        "" => None,
        s => Some(parse_ts(s).ok_or_else(|| reject(RejectReason::UnparseableTimestamp, s.to_string()))?),
    };
    if let Some(seen) = time_seen {
        if seen > created_at {
            return Err(reject(RejectReason::TimeSeenAfterCreated, format_ts(seen)));
        }
    }
    let coord = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    let (Some(latitude), Some(longitude)) = (coord(&raw.latitude), coord(&raw.longitude)) else {
        return Err(reject(RejectReason::CoordinateOutOfRange, format!("{},{}", raw.latitude, raw.longitude)));
    };
    if !(-90.0..=90.0).contains(&latitude) || !(-180.0..=180.0).contains(&longitude) {
        return Err(reject(RejectReason::CoordinateOutOfRange, format!("{latitude},{longitude}")));
    }
    if let Some(bbox) = region {
        if !bbox.contains(latitude, longitude) {
            return Err(reject(RejectReason::OutsideRegion, format!("{latitude},{longitude}")));
        }
    }
    let lsp_id = raw.lsp_id.trim();
    if lsp_id.is_empty() {
        return Err(reject(RejectReason::MissingLsp, String::new()));
    }
    let invalid = |e: DomainError| reject(RejectReason::InvalidCategory, e.to_string());
    let platform: Platform = raw.platform.parse().map_err(invalid)?;
    let gender = parse_category(&raw.gender, Gender::Missing).map_err(invalid)?;
    let age_band = parse_category(&raw.age_band, AgeBand::Missing).map_err(invalid)?;

    Ok(Alert {
        id: id.to_string(),
        created_at,
        time_seen,
        platform,
        latitude,
        longitude,
        lsp_id: lsp_id.to_string(),
        gender,
        age_band,
        location_text: normalise_text(&raw.location_text),
        appearance_text: normalise_text(&raw.appearance_text),
        concerns_text: normalise_text(&raw.concerns_text),
    })
}
