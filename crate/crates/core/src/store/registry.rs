use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_atomic, StoreError};
use crate::learners::TrainedEnsemble;
use crate::matrix::FeatureSchema;
use crate::tempcv::FoldPlan;

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.' | '='))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(StoreError::Schema(format!("invalid artifact id {id:?}")))
    }
}

/// Directory of checksummed model artifacts, each with a text manifest.
#[derive(Debug, Clone)]
pub struct ModelRegistry {
    root: PathBuf,
}

impl ModelRegistry {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn model_path(&self, id: &str) -> PathBuf {
        self.root.join(format!("{id}.model"))
    }

    pub fn put_model(&self, id: &str, model: &TrainedEnsemble) -> Result<PathBuf, StoreError> {
        check_id(id)?;
        let path = self.model_path(id);
        let bytes = model.to_bytes().map_err(|e| StoreError::Artifact { path: path.clone(), reason: e.to_string() })?;
        write_atomic(&path, &bytes)?;
        write_atomic(&self.root.join(format!("{id}.manifest")), model.manifest().as_bytes())?;
        Ok(path)
    }

    pub fn get_model(&self, id: &str) -> Result<TrainedEnsemble, StoreError> {
        check_id(id)?;
        let path = self.model_path(id);
        let bytes = self.read(&path, id)?;
        TrainedEnsemble::from_bytes(&bytes).map_err(|e| StoreError::Artifact { path, reason: e.to_string() })
    }

    /// Loads a model and checks it was trained on `schema`.
    pub fn get_model_for(&self, id: &str, schema: &FeatureSchema) -> Result<TrainedEnsemble, StoreError> {
        let m = self.get_model(id)?;
        let expected = schema.fingerprint();
        if m.schema_fingerprint != expected {
            return Err(StoreError::Fingerprint { found: m.schema_fingerprint, expected });
        }
        Ok(m)
    }

    /// Stores an already enveloped artifact under `name`.
    pub fn put_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        check_id(name)?;
        let path = self.root.join(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    pub fn get_bytes(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        check_id(name)?;
        self.read(&self.root.join(name), name)
    }

    fn read(&self, path: &Path, id: &str) -> Result<Vec<u8>, StoreError> {
        std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(id.to_string()),
            _ => StoreError::Io(e),
        })
    }

    /// Ids of stored models, sorted.
    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".model") {
                out.push(id.to_string());
            }
        }
        out.sort();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub config_hash: String,
    pub corpus_hash: String,
    pub folds: Vec<FoldPlan>,
    #[serde(default)]
    pub metric_paths: Vec<String>,
    #[serde(default)]
    pub artifact_paths: Vec<String>,
}

/// One (fold, grid point, target) training job.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WorkUnit {
    pub target: String,
    pub fold_id: u32,
    pub model_id: String,
}

const RUN_FILE: &str = "run.json";
const PROGRESS_FILE: &str = "progress.jsonl";

/// Tracks a training run so an interrupted run can skip finished work.
#[derive(Debug)]
pub struct RunRegistry {
    dir: PathBuf,
    record: RunRecord,
    done: BTreeSet<WorkUnit>,
}

impl RunRegistry {
    /// Opens the run in `dir`, creating it from `record` if absent. An existing
    /// run with a different config or corpus hash is a conflict.
    pub fn open(dir: &Path, record: RunRecord) -> Result<Self, StoreError> {
        let run_path = dir.join(RUN_FILE);
        let record = if run_path.exists() {
            let existing: RunRecord = serde_json::from_slice(&std::fs::read(&run_path)?)?;
            if existing.config_hash != record.config_hash {
                return Err(StoreError::Conflict(format!(
                    "run in {} was started with config {}, not {}",
                    dir.display(),
                    existing.config_hash,
                    record.config_hash
                )));
            }
            if existing.corpus_hash != record.corpus_hash {
                return Err(StoreError::Conflict(format!(
                    "run in {} was started on corpus {}, not {}",
                    dir.display(),
                    existing.corpus_hash,
                    record.corpus_hash
                )));
            }
            existing
        } else {
            write_atomic(&run_path, &serde_json::to_vec_pretty(&record)?)?;
            record
        };
        let mut done = BTreeSet::new();
        if let Ok(text) = std::fs::read_to_string(dir.join(PROGRESS_FILE)) {
            // a torn last line is simply unfinished work
            for line in text.lines() {
                if let Ok(u) = serde_json::from_str::<WorkUnit>(line) {
                    done.insert(u);
                }
            }
        }
        Ok(Self { dir: dir.to_path_buf(), record, done })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn is_done(&self, unit: &WorkUnit) -> bool {
        self.done.contains(unit)
    }

    pub fn completed(&self) -> &BTreeSet<WorkUnit> {
        &self.done
    }

    /// Durably marks a unit finished. Call only after its outputs are written.
    pub fn mark_done(&mut self, unit: WorkUnit) -> Result<(), StoreError> {
        if self.done.contains(&unit) {
            return Ok(());
        }
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join(PROGRESS_FILE))?;
        let mut line = serde_json::to_vec(&unit)?;
        line.push(b'\n');
        f.write_all(&line).map_err(StoreError::from_io)?;
        f.sync_data().map_err(StoreError::from_io)?;
        self.done.insert(unit);
        Ok(())
    }

    /// Records output paths on the run record.
    pub fn set_outputs(&mut self, metric_paths: Vec<String>, artifact_paths: Vec<String>) -> Result<(), StoreError> {
        self.record.metric_paths = metric_paths;
        self.record.artifact_paths = artifact_paths;
        write_atomic(&self.dir.join(RUN_FILE), &serde_json::to_vec_pretty(&self.record)?)
    }
}
