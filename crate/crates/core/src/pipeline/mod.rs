//! Experiment orchestration: corpus, features, grid training, evaluation and
//! reporting, each stage reading the previous stage's outputs from disk.

mod config;
mod evaluate;
mod features;
mod report;
mod scores;
mod serving;
mod synth;
mod train;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::sha256_hex;
use crate::domain::io::{Corpus, ALERTS_FILE, HOTSPOTS_FILE, OUTCOMES_FILE, WEATHER_FILE};

pub use config::{default_ladder, CorpusSource, EvalSettings, ExperimentConfig, ServeSettings, Target};
pub use evaluate::{
    auto_referral_threshold, cmd_evaluate, null_importance_check, EvaluationSummary, NullCheck, NullGroup,
    ServingChoice, EVALUATION_FILE,
};
pub use features::{cmd_featurize, FeatureManifest, FoldArtifact};
pub use report::{cmd_report, ModelSelection};
pub use scores::{read_scores, write_scores, ScoreRow};
pub use serving::{load_serving, LiveScores, ServingBundle};
pub use synth::cmd_synth;
pub use train::{cmd_train, TrainOptions, TrainOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or missing upstream inputs.
    #[error("{0}")]
    Validation(String),
    /// A resumed run disagrees with what is on disk.
    #[error("resume conflict: {0}")]
    Conflict(String),
    #[error("{0}")]
    Runtime(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl PipelineError {
    /// 2 for validation problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::Conflict(_) => 2,
            PipelineError::Runtime(_) | PipelineError::Io { .. } => 3,
        }
    }

    pub(crate) fn runtime(e: impl std::fmt::Display) -> Self {
        PipelineError::Runtime(e.to_string())
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| PipelineError::Io { path: path.to_path_buf(), source }
    }
}

impl From<crate::store::StoreError> for PipelineError {
    fn from(e: crate::store::StoreError) -> Self {
        match e {
            crate::store::StoreError::Conflict(m) => PipelineError::Conflict(m),
            other => PipelineError::Runtime(other.to_string()),
        }
    }
}

/// Where each stage reads and writes under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn models(&self, target: Target) -> PathBuf {
        self.root.join("models").join(target.as_str())
    }

    pub fn null_models(&self) -> PathBuf {
        self.root.join("models").join("null")
    }

    pub fn scores(&self, target: Target, model_id: &str, fold_id: u32) -> PathBuf {
        self.root.join("scores").join(target.as_str()).join(model_id).join(format!("fold-{fold_id:02}.csv"))
    }

    pub fn run(&self) -> PathBuf {
        self.root.join("run")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn service(&self) -> PathBuf {
        self.root.join("service")
    }
}

pub fn model_artifact_id(model_id: &str, fold_id: u32) -> String {
    format!("{model_id}.fold-{fold_id:02}")
}

pub fn featurizer_file(fold_id: u32) -> String {
    format!("fold-{fold_id:02}.featurizer")
}

/// Seed for one training job, independent of scheduling.
pub(crate) fn unit_seed(seed: u64, target: &str, fold_id: u32, model_id: &str) -> u64 {
    let h = sha256_hex(format!("{seed}/{target}/{fold_id}/{model_id}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex digest")
}

/// Directory the corpus is read from.
pub fn corpus_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.corpus.dir.clone().unwrap_or_else(|| Layout::new(&cfg.out_dir).corpus())
}

const CORPUS_FILES: [&str; 4] = [ALERTS_FILE, OUTCOMES_FILE, HOTSPOTS_FILE, WEATHER_FILE];

/// SHA-256 of each table plus a combined hash. Checks them against
/// `manifest.json` when the directory has one.
pub fn corpus_hashes(dir: &Path) -> Result<(String, BTreeMap<String, String>), PipelineError> {
    let mut files = BTreeMap::new();
    for name in CORPUS_FILES {
        let p = dir.join(name);
        let bytes = std::fs::read(&p).map_err(|e| {
            PipelineError::Validation(format!("corpus file {} is missing ({e}); run `synth` first", p.display()))
        })?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    let manifest = dir.join(crate::synthgen::MANIFEST_FILE);
    if manifest.exists() {
        #[derive(Deserialize)]
        struct Files {
            files: BTreeMap<String, String>,
        }
        let text = std::fs::read_to_string(&manifest).map_err(PipelineError::io(&manifest))?;
        let m: Files = serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", manifest.display())))?;
        for (name, hash) in &files {
            if m.files.get(name) != Some(hash) {
                return Err(PipelineError::Validation(format!(
                    "{} does not match {}; the corpus changed after it was written",
                    name,
                    manifest.display()
                )));
            }
        }
    }
    let combined = sha256_hex(serde_json::to_string(&files).expect("map serialises").as_bytes());
    Ok((combined, files))
}

pub(crate) struct LoadedCorpus {
    pub corpus: Corpus,
    pub hash: String,
    pub rejected: usize,
}

pub(crate) fn load_corpus(cfg: &ExperimentConfig) -> Result<LoadedCorpus, PipelineError> {
    let dir = corpus_dir(cfg);
    let (hash, _) = corpus_hashes(&dir)?;
    let region = cfg.corpus.dir.is_none().then_some(cfg.corpus.synthetic.region);
    let (corpus, rejected) = Corpus::read_dir(&dir, region.as_ref()).map_err(PipelineError::runtime)?;
    if !rejected.is_empty() {
        tracing::warn!(count = rejected.len(), "rejected alert rows while loading corpus");
    }
    Ok(LoadedCorpus { corpus, hash, rejected: rejected.len() })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    crate::store::write_atomic(path, bytes).map_err(PipelineError::runtime)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(PipelineError::runtime)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path, hint: &str) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Validation(format!("{} is missing ({e}); run `{hint}` first", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Runtime(format!("{}: {e}", path.display())))
}

/// Renders a CSV into bytes with the given writer function.
pub(crate) fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(PipelineError::runtime)?;
    Ok(buf)
}

/// Runs a closure on a pool of `workers` threads (0 = one per core).
pub(crate) fn with_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(PipelineError::runtime)?;
    Ok(pool.install(f))
}

/// Runs every stage in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<(), PipelineError> {
    if cfg.corpus.dir.is_none() {
        cmd_synth(cfg)?;
    }
    cmd_featurize(cfg)?;
    cmd_train(cfg, &TrainOptions::default())?;
    cmd_evaluate(cfg)?;
    cmd_report(cfg)?;
    Ok(())
}
