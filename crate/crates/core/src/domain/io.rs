//! UTF-8 CSV readers and writers for the corpus files. Timestamps are
//! ISO-8601 UTC (`YYYY-MM-DDTHH:MM:SSZ`).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    format_ts, parse_ts, validate_alert_in, Alert, BoundingBox, Hotspot, OutcomeRecord, RawAlert, Rejection,
    WeatherHour,
};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    Row { row: usize, msg: String },
}

fn open(path: &Path) -> Result<File, CsvError> {
    File::open(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File, CsvError> {
    File::create(path).map_err(|source| CsvError::Io { path: path.display().to_string(), source })
}

pub const ALERT_HEADER: [&str; 12] = [
    "id",
    "created_at",
    "time_seen",
    "platform",
    "latitude",
    "longitude",
    "lsp_id",
    "gender",
    "age_band",
    "location_text",
    "appearance_text",
    "concerns_text",
];

pub fn write_alerts<W: Write>(w: W, alerts: &[Alert]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(w);
    for a in alerts {
        wtr.serialize(RawAlert::from(a))?;
    }
    if alerts.is_empty() {
        wtr.write_record(ALERT_HEADER)?;
    }
    wtr.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

/// Result of reading an alert file: accepted alerts plus per-row rejections.
#[derive(Debug, Default)]
pub struct AlertLoad {
    pub alerts: Vec<Alert>,
    pub rejected: Vec<Rejection>,
}

pub fn read_alerts<R: Read>(r: R, region: Option<&BoundingBox>) -> Result<AlertLoad, CsvError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut load = AlertLoad::default();
    for rec in rdr.deserialize::<RawAlert>() {
        match validate_alert_in(&rec?, region) {
            Ok(a) => load.alerts.push(a),
            Err(rej) => load.rejected.push(rej),
        }
    }
    Ok(load)
}

#[derive(Serialize, Deserialize)]
struct OutcomeRow {
    alert_id: String,
    outcome_code: String,
    resolved_at: String,
}

pub fn write_outcomes<W: Write>(w: W, outcomes: &[OutcomeRecord]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(w);
    for o in outcomes {
        wtr.serialize(OutcomeRow {
            alert_id: o.alert_id.clone(),
            outcome_code: o.outcome_code.to_string(),
            resolved_at: format_ts(o.resolved_at),
        })?;
    }
    if outcomes.is_empty() {
        wtr.write_record(["alert_id", "outcome_code", "resolved_at"])?;
    }
    wtr.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn read_outcomes<R: Read>(r: R) -> Result<Vec<OutcomeRecord>, CsvError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<OutcomeRow>().enumerate() {
        let row = rec?;
        let outcome_code = row
            .outcome_code
            .parse()
            .map_err(|e: super::DomainError| CsvError::Row { row: i + 1, msg: e.to_string() })?;
        let resolved_at = parse_ts(&row.resolved_at)
            .ok_or_else(|| CsvError::Row { row: i + 1, msg: format!("bad timestamp {}", row.resolved_at) })?;
        out.push(OutcomeRecord { alert_id: row.alert_id, outcome_code, resolved_at });
    }
    Ok(out)
}

pub fn write_hotspots<W: Write>(w: W, hotspots: &[Hotspot]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(w);
    for h in hotspots {
        wtr.serialize(h)?;
    }
    if hotspots.is_empty() {
        wtr.write_record(["latitude", "longitude", "label"])?;
    }
    wtr.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn read_hotspots<R: Read>(r: R) -> Result<Vec<Hotspot>, CsvError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<Hotspot>().enumerate() {
        let h = rec?;
        if !(-90.0..=90.0).contains(&h.latitude) || !(-180.0..=180.0).contains(&h.longitude) {
            return Err(CsvError::Row { row: i + 1, msg: "hotspot coordinate out of range".into() });
        }
        out.push(h);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct WeatherRow {
    timestamp: String,
    temperature: f64,
    wind_speed: f64,
    wind_gust: f64,
    precip_probability: f64,
    snow_accumulation: f64,
}

pub fn write_weather<W: Write>(w: W, hours: &[WeatherHour]) -> Result<(), CsvError> {
    let mut wtr = csv::Writer::from_writer(w);
    for h in hours {
        wtr.serialize(WeatherRow {
            timestamp: format_ts(h.timestamp),
            temperature: h.temperature,
            wind_speed: h.wind_speed,
            wind_gust: h.wind_gust,
            precip_probability: h.precip_probability,
            snow_accumulation: h.snow_accumulation,
        })?;
    }
    if hours.is_empty() {
        wtr.write_record([
            "timestamp",
            "temperature",
            "wind_speed",
            "wind_gust",
            "precip_probability",
            "snow_accumulation",
        ])?;
    }
    wtr.flush().map_err(|source| CsvError::Io { path: "<writer>".into(), source })?;
    Ok(())
}

pub fn read_weather<R: Read>(r: R) -> Result<Vec<WeatherHour>, CsvError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<WeatherRow>().enumerate() {
        let w = rec?;
        let timestamp = parse_ts(&w.timestamp)
            .ok_or_else(|| CsvError::Row { row: i + 1, msg: format!("bad timestamp {}", w.timestamp) })?;
        if !(0.0..=1.0).contains(&w.precip_probability) || w.snow_accumulation < 0.0 {
            return Err(CsvError::Row { row: i + 1, msg: "weather value out of range".into() });
        }
        out.push(WeatherHour {
            timestamp,
            temperature: w.temperature,
            wind_speed: w.wind_speed,
            wind_gust: w.wind_gust,
            precip_probability: w.precip_probability,
            snow_accumulation: w.snow_accumulation,
        });
    }
    Ok(out)
}

/// The four corpus tables, as stored in one directory.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub alerts: Vec<Alert>,
    pub outcomes: Vec<OutcomeRecord>,
    pub hotspots: Vec<Hotspot>,
    pub weather: Vec<WeatherHour>,
}

pub const ALERTS_FILE: &str = "alerts.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const HOTSPOTS_FILE: &str = "hotspots.csv";
pub const WEATHER_FILE: &str = "weather.csv";

impl Corpus {
    pub fn write_dir(&self, dir: &Path) -> Result<(), CsvError> {
        std::fs::create_dir_all(dir).map_err(|source| CsvError::Io { path: dir.display().to_string(), source })?;
        write_alerts(create(&dir.join(ALERTS_FILE))?, &self.alerts)?;
        write_outcomes(create(&dir.join(OUTCOMES_FILE))?, &self.outcomes)?;
        write_hotspots(create(&dir.join(HOTSPOTS_FILE))?, &self.hotspots)?;
        write_weather(create(&dir.join(WEATHER_FILE))?, &self.weather)?;
        Ok(())
    }

    /// Loads a corpus directory. Rejected alert rows are returned alongside.
    pub fn read_dir(dir: &Path, region: Option<&BoundingBox>) -> Result<(Corpus, Vec<Rejection>), CsvError> {
        let load = read_alerts(open(&dir.join(ALERTS_FILE))?, region)?;
        let corpus = Corpus {
            alerts: load.alerts,
            outcomes: read_outcomes(open(&dir.join(OUTCOMES_FILE))?)?,
            hotspots: read_hotspots(open(&dir.join(HOTSPOTS_FILE))?)?,
            weather: read_weather(open(&dir.join(WEATHER_FILE))?)?,
        };
        Ok((corpus, load.rejected))
    }
}
