//! Hourly weather: seasonal sinusoid, AR(1) daily anomaly, occasional snow, dropped days.

use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::WeatherHour;

/// Hidden daily state, kept for the latent quality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayState {
    pub date: NaiveDate,
    pub temp_avg: f64,
    pub precip: f64,
    pub snow: bool,
}

impl DayState {
    /// Harshness of the day for someone sleeping out; roughly zero-mean over a year.
    pub fn severity(&self) -> f64 {
        (8.0 - self.temp_avg) / 5.0 + if self.snow { 1.0 } else { 0.0 } + self.precip - 0.4
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Returns the observed hours (with some whole days missing) and the full daily state.
/// The first day is always observed.
pub fn generate_weather(rng: &mut ChaCha8Rng, start: NaiveDate, end: NaiveDate) -> (Vec<WeatherHour>, Vec<DayState>) {
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    let mut hours = Vec::new();
    let mut days = Vec::new();
    let mut anomaly = 0.0;
    let mut wet = 0.0;
    let mut date = start;
    while date <= end {
        let season = (std::f64::consts::TAU * (date.ordinal0() as f64 - 15.0) / 365.25).cos();
        anomaly = 0.75 * anomaly + 2.6 * noise.sample(rng);
        wet = (0.6 * wet + 0.4 * rng.random::<f64>()).clamp(0.0, 1.0);
        let mean = 11.0 - 7.0 * season + anomaly;
        let snow = mean < 2.5 && rng.random_bool(0.45);
        let wind = (4.0 + 2.0 * noise.sample(rng)).max(0.5);
        let missing = date != start && rng.random_bool(0.01);
        let mut temps = Vec::with_capacity(24);
        for h in 0..24 {
            let diurnal = -3.0 * (std::f64::consts::TAU * (h as f64 - 3.0) / 24.0).cos();
            let temp = round2(mean + diurnal + 0.4 * noise.sample(rng));
            temps.push(temp);
            let precip = round2((wet + 0.15 * noise.sample(rng)).clamp(0.0, 1.0));
            let hw = round2((wind + 0.8 * noise.sample(rng)).max(0.0));
            let hour = WeatherHour {
                timestamp: date.and_hms_opt(h, 0, 0).expect("valid hour").and_utc(),
                temperature: temp,
                wind_speed: hw,
                wind_gust: round2(hw * 1.6 + rng.random::<f64>() * 3.0),
                precip_probability: precip,
                snow_accumulation: if snow && (6..18).contains(&h) { round2(0.2 + rng.random::<f64>()) } else { 0.0 },
            };
            if !missing {
                hours.push(hour);
            }
        }
        days.push(DayState { date, temp_avg: temps.iter().sum::<f64>() / 24.0, precip: wet, snow });
        date += Duration::days(1);
    }
    (hours, days)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn covers_range_and_winter_is_colder() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let start = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let end = NaiveDate::from_ymd_opt(2018, 12, 31).unwrap();
        let (hours, days) = generate_weather(&mut rng, start, end);
        assert_eq!(days.len(), 365);
        assert_eq!(hours[0].timestamp.date_naive(), start);
        assert!(hours.len() <= 365 * 24 && hours.len() > 340 * 24);
        let mean = |m: u32| {
            let v: Vec<f64> = days.iter().filter(|d| d.date.month() == m).map(|d| d.temp_avg).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(mean(1) + 8.0 < mean(7));
        assert!(days.iter().any(|d| d.snow));
    }
}
