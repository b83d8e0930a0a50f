//! Feature engineering: alerts plus hotspots, weather and alert history into a
//! named, group-tagged matrix.

mod assemble;
pub mod geo;
pub mod history;
pub mod weather;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::matrix::{FeatureGroup, MatrixError};
use crate::textmine::TextError;

pub use assemble::{base_columns, datetime_cyclical, BaseFeatures, FeatureContext, FittedFeaturizer, ImputationPriors};
pub use geo::{haversine_m, hotspot_flags};
pub use history::HistoryIndex;
pub use weather::{weather_daily, WeatherTable};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("no weather observations")]
    NoWeather,
    #[error("no weather on or before {date} (series starts {first})")]
    WeatherBeforeStart { date: NaiveDate, first: NaiveDate },
    #[error("invalid feature configuration: {0}")]
    Config(String),
    #[error("unknown alert `{0}` in outcomes")]
    UnknownAlert(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureWindows {
    pub distances_m: Vec<f64>,
    pub day_windows: Vec<u32>,
}

impl Default for FeatureWindows {
    fn default() -> Self {
        Self {
            distances_m: vec![50.0, 100.0, 250.0, 500.0, 1000.0, 5000.0, 10000.0],
            day_windows: vec![7, 28, 60, 360],
        }
    }
}

impl FeatureWindows {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let ascending_f = self.distances_m.windows(2).all(|w| w[0] < w[1]);
        let ascending_d = self.day_windows.windows(2).all(|w| w[0] < w[1]);
        if self.distances_m.is_empty() || self.day_windows.is_empty() {
            return Err(FeatureError::Config("distance and day windows must be non-empty".into()));
        }
        if !ascending_f || !ascending_d || self.distances_m[0] <= 0.0 || self.day_windows[0] == 0 {
            return Err(FeatureError::Config("windows must be positive and strictly ascending".into()));
        }
        Ok(())
    }

    pub fn max_distance(&self) -> f64 {
        self.distances_m.last().copied().unwrap_or(0.0)
    }
}

/// Topic-model settings for the two entity LDA models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopicSettings {
    pub topics: usize,
    pub sweeps: usize,
    pub infer_sweeps: usize,
    /// Training documents are subsampled to at most this many per fit.
    pub max_docs: usize,
    pub seed: u64,
}

impl Default for TopicSettings {
    fn default() -> Self {
        Self { topics: 10, sweeps: 200, infer_sweeps: 50, max_docs: 4000, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub windows: FeatureWindows,
    pub groups: BTreeSet<FeatureGroup>,
    pub duplicate_m: f64,
    pub duplicate_days: u32,
    pub lda: TopicSettings,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            windows: FeatureWindows::default(),
            groups: FeatureGroup::ALL.into_iter().collect(),
            duplicate_m: 500.0,
            duplicate_days: 7,
            lda: TopicSettings::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        self.windows.validate()?;
        if self.groups.is_empty() {
            return Err(FeatureError::Config("at least one feature group must be enabled".into()));
        }
        if self.duplicate_m <= 0.0 || self.duplicate_days == 0 {
            return Err(FeatureError::Config("duplicate radius and window must be positive".into()));
        }
        if self.lda.topics == 0 {
            return Err(FeatureError::Config("lda topics must be >= 1".into()));
        }
        Ok(())
    }
}
