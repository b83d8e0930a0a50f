use std::path::PathBuf;
use std::time::Duration;

use streetrank_core::pipeline::{ExperimentConfig, Layout};

pub const PORT_ENV: &str = "STREETRANK_PORT";
pub const DATA_DIR_ENV: &str = "STREETRANK_DATA_DIR";
pub const EVENT_LOG_FILE: &str = "events.log";

#[derive(Debug, thiserror::Error)]
#[error("{var}: {reason}")]
pub struct ConfigError {
    pub var: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub experiment: ExperimentConfig,
    pub port: u16,
    pub data_dir: PathBuf,
    pub refresh: Duration,
    /// Replaces the calibrated threshold; `inf` turns auto-referral off.
    pub threshold_override: Option<f64>,
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        let s = &cfg.serve;
        Self {
            experiment: cfg.clone(),
            port: s.port,
            data_dir: s.data_dir.clone().unwrap_or_else(|| Layout::new(&cfg.out_dir).service()),
            refresh: Duration::from_secs(s.refresh_secs.max(1)),
            threshold_override: s.auto_referral_threshold,
            static_dir: s.static_dir.clone(),
        }
    }

    /// Applies `STREETRANK_PORT` and `STREETRANK_DATA_DIR` as looked up by `var`.
    pub fn with_env(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        if let Some(p) = var(PORT_ENV) {
            self.port = p.trim().parse().map_err(|e| ConfigError { var: PORT_ENV, reason: format!("{e}") })?;
        }
        if let Some(d) = var(DATA_DIR_ENV) {
            if d.trim().is_empty() {
                return Err(ConfigError { var: DATA_DIR_ENV, reason: "empty path".into() });
            }
            self.data_dir = PathBuf::from(d);
        }
        Ok(self)
    }

    pub fn event_log(&self) -> PathBuf {
        self.data_dir.join(EVENT_LOG_FILE)
    }
}
