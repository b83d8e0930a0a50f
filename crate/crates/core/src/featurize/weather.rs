//! Daily weather aggregates with forward fill.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::FeatureError;
use crate::domain::{WeatherDay, WeatherHour};

pub const WEATHER_COLUMNS: [&str; 8] = [
    "weather_temp_max",
    "weather_temp_min",
    "weather_temp_avg",
    "weather_precip_prob_max",
    "weather_precip_prob_min",
    "weather_snow",
    "weather_wind_avg",
    "weather_gust_max",
];

/// Aggregates the hours of each calendar date (UTC).
pub fn aggregate_days(hours: &[WeatherHour]) -> Vec<WeatherDay> {
    let mut by_day: BTreeMap<NaiveDate, Vec<&WeatherHour>> = BTreeMap::new();
    for h in hours {
        by_day.entry(h.timestamp.date_naive()).or_default().push(h);
    }
    by_day
        .into_iter()
        .map(|(date, hs)| {
            let n = hs.len() as f64;
            let max = |f: fn(&WeatherHour) -> f64| hs.iter().map(|h| f(h)).fold(f64::NEG_INFINITY, f64::max);
            let min = |f: fn(&WeatherHour) -> f64| hs.iter().map(|h| f(h)).fold(f64::INFINITY, f64::min);
            WeatherDay {
                date,
                temp_max: max(|h| h.temperature),
                temp_min: min(|h| h.temperature),
                temp_avg: hs.iter().map(|h| h.temperature).sum::<f64>() / n,
                precip_prob_max: max(|h| h.precip_probability),
                precip_prob_min: min(|h| h.precip_probability),
                snow: hs.iter().any(|h| h.snow_accumulation > 0.0),
                wind_avg: hs.iter().map(|h| h.wind_speed).sum::<f64>() / n,
                gust_max: max(|h| h.wind_gust),
            }
        })
        .collect()
}

pub fn day_values(d: &WeatherDay) -> [f64; 8] {
    [
        d.temp_max,
        d.temp_min,
        d.temp_avg,
        d.precip_prob_max,
        d.precip_prob_min,
        if d.snow { 1.0 } else { 0.0 },
        d.wind_avg,
        d.gust_max,
    ]
}

/// Daily table; lookups on dates without observations return the most recent earlier day.
#[derive(Debug, Clone)]
pub struct WeatherTable {
    days: BTreeMap<NaiveDate, WeatherDay>,
}

impl WeatherTable {
    pub fn new(hours: &[WeatherHour]) -> Result<Self, FeatureError> {
        if hours.is_empty() {
            return Err(FeatureError::NoWeather);
        }
        Ok(Self { days: aggregate_days(hours).into_iter().map(|d| (d.date, d)).collect() })
    }

    pub fn first_date(&self) -> NaiveDate {
        *self.days.keys().next().expect("non-empty")
    }

    /// The day whose values apply to `date`.
    pub fn lookup(&self, date: NaiveDate) -> Result<&WeatherDay, FeatureError> {
        self.days
            .range(..=date)
            .next_back()
            .map(|(_, d)| d)
            .ok_or(FeatureError::WeatherBeforeStart { date, first: self.first_date() })
    }
}

/// Features of the alert's calendar date, forward-filled.
pub fn weather_daily(table: &WeatherTable, date: NaiveDate) -> Result<[f64; 8], FeatureError> {
    table.lookup(date).map(day_values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn hour(day: u32, h: u32, temp: f64, snow: f64) -> WeatherHour {
        WeatherHour {
            timestamp: Utc.with_ymd_and_hms(2018, 1, day, h, 0, 0).unwrap(),
            temperature: temp,
            wind_speed: 2.0,
            wind_gust: 5.0 + h as f64,
            precip_probability: 0.1 * h as f64,
            snow_accumulation: snow,
        }
    }

    #[test]
    fn daily_aggregates_and_snow() {
        let t = WeatherTable::new(&[hour(1, 0, 1.0, 0.0), hour(1, 1, 2.0, 0.5), hour(1, 2, 3.0, 0.0)]).unwrap();
        let v = weather_daily(&t, NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()).unwrap();
        assert_eq!(&v[..3], &[3.0, 1.0, 2.0]);
        assert_eq!(v[5], 1.0);
        assert_eq!(v[7], 7.0);
    }

    #[test]
    fn forward_fill_and_errors() {
        let t = WeatherTable::new(&[hour(1, 0, 1.0, 0.0), hour(3, 0, 9.0, 0.0)]).unwrap();
        let d1 = weather_daily(&t, NaiveDate::from_ymd_opt(2018, 1, 1).unwrap()).unwrap();
        let d2 = weather_daily(&t, NaiveDate::from_ymd_opt(2018, 1, 2).unwrap()).unwrap();
        assert_eq!(d1, d2);
        assert!(weather_daily(&t, NaiveDate::from_ymd_opt(2017, 12, 31).unwrap()).is_err());
        assert!(matches!(WeatherTable::new(&[]), Err(FeatureError::NoWeather)));
    }
}
