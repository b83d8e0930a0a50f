use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::artifact::sha256_hex;
use crate::featurize::FeatureConfig;
use crate::learners::{HyperGrid, LearnerSettings};
use crate::synthgen::GeneratorConfig;
use crate::tempcv::CvConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    PositiveOutcome,
    Referral,
}

impl Target {
    pub const ALL: [Target; 2] = [Target::PositiveOutcome, Target::Referral];

    pub fn as_str(self) -> &'static str {
        match self {
            Target::PositiveOutcome => "positive_outcome",
            Target::Referral => "referral",
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        Target::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Either an existing corpus directory or generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSource {
    /// Directory holding alerts.csv, outcomes.csv, hotspots.csv and weather.csv.
    pub dir: Option<PathBuf>,
    /// Used when `dir` is absent. Its `seed` is replaced by the experiment seed.
    pub synthetic: GeneratorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Fit a model on permuted labels and report its group importances.
    pub null_check: bool,
    /// Alerts scoring at or above the score where precision on the latest
    /// fold first reaches this value are auto-referred by the service.
    pub auto_referral_precision: f64,
    /// Fewest labelled alerts the auto-referral precision must be measured on.
    pub auto_referral_min_support: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { null_check: true, auto_referral_precision: 0.75, auto_referral_min_support: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSettings {
    pub port: u16,
    /// Event log and service state; defaults to `<out_dir>/service`.
    pub data_dir: Option<PathBuf>,
    /// Overrides the calibrated auto-referral threshold. `inf` disables auto-referral.
    pub auto_referral_threshold: Option<f64>,
    pub refresh_secs: u64,
    /// Static files served under `/ui`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeSettings {
    fn default() -> Self {
        Self { port: 8080, data_dir: None, auto_referral_threshold: None, refresh_secs: 60, static_dir: None }
    }
}

pub fn default_ladder() -> Vec<usize> {
    vec![50, 100, 250, 500, 750, 1000, 1500, 2000, 3000, 4000, 5000, 7000, 10000]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for training; 0 uses every core. Does not affect results.
    pub workers: usize,
    pub targets: Vec<Target>,
    pub k_ladder: Vec<usize>,
    pub corpus: CorpusSource,
    pub cv: CvConfig,
    pub features: FeatureConfig,
    pub grid: HyperGrid,
    pub learner: LearnerSettings,
    pub evaluation: EvalSettings,
    pub serve: ServeSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("out"),
            workers: 1,
            targets: Target::ALL.to_vec(),
            k_ladder: default_ladder(),
            corpus: CorpusSource::default(),
            cv: CvConfig::default(),
            features: FeatureConfig::default(),
            grid: HyperGrid::desk(),
            learner: LearnerSettings::default(),
            evaluation: EvalSettings::default(),
            serve: ServeSettings::default(),
        }
    }
}

/// The parts of the config that determine results.
#[derive(Serialize)]
struct HashedParts<'a> {
    seed: u64,
    targets: &'a [Target],
    k_ladder: &'a [usize],
    corpus: &'a CorpusSource,
    cv: &'a CvConfig,
    features: &'a FeatureConfig,
    grid: &'a HyperGrid,
    learner: &'a LearnerSettings,
    evaluation: &'a EvalSettings,
}

impl ExperimentConfig {
    /// Parses a TOML file. Relative paths inside it are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.out_dir);
        if let Some(d) = cfg.corpus.dir.as_mut() {
            resolve(d);
        }
        if let Some(d) = cfg.serve.data_dir.as_mut() {
            resolve(d);
        }
        if let Some(d) = cfg.serve.static_dir.as_mut() {
            resolve(d);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Validation(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let invalid = |m: String| Err(PipelineError::Validation(m));
        if self.targets.is_empty() {
            return invalid("at least one target is required".into());
        }
        if self.k_ladder.is_empty() || self.k_ladder.contains(&0) {
            return invalid("k_ladder must be non-empty and contain only positive values".into());
        }
        if self.k_ladder.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("k_ladder must be strictly ascending".into());
        }
        if let Some(d) = &self.corpus.dir {
            if !d.is_dir() {
                return invalid(format!("corpus directory {} does not exist", d.display()));
            }
        } else {
            self.generator().validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        }
        self.cv.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.features.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        self.grid.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.evaluation.auto_referral_precision) {
            return invalid("evaluation.auto_referral_precision must lie in [0, 1]".into());
        }
        if let Some(t) = self.serve.auto_referral_threshold {
            if t.is_nan() {
                return invalid("serve.auto_referral_threshold is NaN".into());
            }
        }
        if let Some(d) = &self.serve.static_dir {
            if !d.is_dir() {
                return invalid(format!("static directory {} does not exist", d.display()));
            }
        }
        Ok(())
    }

    /// Generator settings with the experiment seed applied.
    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig { seed: self.seed, ..self.corpus.synthetic.clone() }
    }

    /// Hex SHA-256 over everything that affects results (not paths or worker count).
    pub fn config_hash(&self) -> String {
        let mut corpus = self.corpus.clone();
        corpus.synthetic.seed = self.seed;
        let parts = HashedParts {
            seed: self.seed,
            targets: &self.targets,
            k_ladder: &self.k_ladder,
            corpus: &corpus,
            cv: &self.cv,
            features: &self.features,
            grid: &self.grid,
            learner: &self.learner,
            evaluation: &self.evaluation,
        };
        sha256_hex(&serde_json::to_vec(&parts).expect("config serialises"))
    }

    /// Hash of the settings the feature stage depends on.
    pub fn features_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(&(&self.cv, &self.features, self.seed)).expect("config serialises"))
    }
}
