//! Binary classifiers used for ranking alerts: decision tree, random forest,
//! extra trees, AdaBoost and a stratified random baseline.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, ArtifactError};
use crate::matrix::{FeatureGroup, FeatureMatrix, FeatureSchema};

mod boost;
mod forest;
mod grid;
pub mod tree;

pub use boost::fit_adaboost;
pub use forest::fit_forest;
pub use grid::{BoostGrid, ForestGrid, HyperGrid, MaxDepth, TreeGrid};
pub use tree::{fit_tree, Dataset, LeafSmoothing, MaxFeatures, SplitMode, Tree, TreeNode, TreeParams};

const MODEL_MAGIC: &[u8; 8] = b"SRMODEL\0";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("matrix has {rows} rows but {labels} labels were given")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("no training rows")]
    Empty,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("schema mismatch: model trained on {expected}, matrix is {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("{0} has no feature importances")]
    NotTreeBased(ModelKind),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    RandomForest,
    ExtraTrees,
    AdaBoost,
    DecisionTree,
    StratifiedDummy,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    RandomForest { n_estimators: usize, max_depth: Option<usize> },
    ExtraTrees { n_estimators: usize, max_depth: Option<usize> },
    AdaBoost { n_estimators: usize, learning_rate: f64 },
    DecisionTree { max_depth: Option<usize> },
    StratifiedDummy,
}

fn depth_label(d: Option<usize>) -> String {
    d.map_or_else(|| "none".to_string(), |d| d.to_string())
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::RandomForest { .. } => ModelKind::RandomForest,
            ModelSpec::ExtraTrees { .. } => ModelKind::ExtraTrees,
            ModelSpec::AdaBoost { .. } => ModelKind::AdaBoost,
            ModelSpec::DecisionTree { .. } => ModelKind::DecisionTree,
            ModelSpec::StratifiedDummy => ModelKind::StratifiedDummy,
        }
    }

    /// Short identifier used in file names and reports, e.g. `rf-n500-d5`.
    pub fn id(&self) -> String {
        match *self {
            ModelSpec::RandomForest { n_estimators, max_depth } => {
                format!("rf-n{n_estimators}-d{}", depth_label(max_depth))
            }
            ModelSpec::ExtraTrees { n_estimators, max_depth } => {
                format!("et-n{n_estimators}-d{}", depth_label(max_depth))
            }
            ModelSpec::AdaBoost { n_estimators, learning_rate } => format!("ada-n{n_estimators}-lr{learning_rate}"),
            ModelSpec::DecisionTree { max_depth } => format!("dt-d{}", depth_label(max_depth)),
            ModelSpec::StratifiedDummy => "dummy".to_string(),
        }
    }
}

/// Settings shared by every grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerSettings {
    pub min_samples_leaf: usize,
    pub smoothing: LeafSmoothing,
    pub max_features: MaxFeatures,
    /// Depth of AdaBoost's weak learners.
    pub boost_base_depth: usize,
    /// Bootstrap rows per tree in random forests.
    pub bootstrap: bool,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            min_samples_leaf: 5,
            smoothing: LeafSmoothing::Laplace,
            max_features: MaxFeatures::Sqrt,
            boost_base_depth: 1,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedEnsemble {
    pub spec: ModelSpec,
    pub settings: LearnerSettings,
    pub trees: Vec<Tree>,
    /// Vote weights; only used by AdaBoost.
    pub tree_weights: Vec<f64>,
    pub schema_fingerprint: String,
    pub n_features: usize,
    pub fold_id: Option<u32>,
    pub seed: u64,
    /// Positive rate of the training labels.
    pub prior: f64,
}

/// Per-tree generator: independent of how trees are scheduled across threads.
pub fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

fn check_labels(matrix: &FeatureMatrix, labels: &[bool]) -> Result<f64, LearnError> {
    if matrix.n_rows() != labels.len() {
        return Err(LearnError::LengthMismatch { rows: matrix.n_rows(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Err(LearnError::Empty);
    }
    Ok(labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64)
}

/// Stratified random baseline: stores the positive prior only.
pub fn fit_dummy(schema: &FeatureSchema, labels: &[bool], seed: u64) -> Result<TrainedEnsemble, LearnError> {
    if labels.is_empty() {
        return Err(LearnError::Empty);
    }
    let prior = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    Ok(TrainedEnsemble {
        spec: ModelSpec::StratifiedDummy,
        settings: LearnerSettings::default(),
        trees: Vec::new(),
        tree_weights: Vec::new(),
        schema_fingerprint: schema.fingerprint(),
        n_features: schema.len(),
        fold_id: None,
        seed,
        prior,
    })
}

/// Fits the model described by `spec`.
pub fn fit_model(
    spec: &ModelSpec,
    settings: &LearnerSettings,
    matrix: &FeatureMatrix,
    labels: &[bool],
    seed: u64,
) -> Result<TrainedEnsemble, LearnError> {
    match *spec {
        ModelSpec::StratifiedDummy => {
            check_labels(matrix, labels)?;
            fit_dummy(matrix.schema(), labels, seed)
        }
        ModelSpec::AdaBoost { n_estimators, learning_rate } => {
            fit_adaboost(matrix, labels, n_estimators, learning_rate, settings, seed)
        }
        _ => fit_forest(matrix, labels, spec, settings, seed),
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl TrainedEnsemble {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Score of one feature row; not defined for the random baseline.
    pub fn score_row(&self, row: &[f64]) -> f64 {
        match self.kind() {
            ModelKind::AdaBoost => {
                let total: f64 = self.tree_weights.iter().sum();
                if total <= 0.0 {
                    return 0.5;
                }
                let margin: f64 = self
                    .trees
                    .iter()
                    .zip(&self.tree_weights)
                    .map(|(t, a)| if t.predict(row) >= 0.5 { *a } else { -*a })
                    .sum();
                logistic(margin / total)
            }
            ModelKind::StratifiedDummy => self.prior,
            _ => self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len().max(1) as f64,
        }
    }

    pub fn predict_scores(&self, matrix: &FeatureMatrix) -> Result<Vec<f64>, LearnError> {
        let found = matrix.schema().fingerprint();
        if found != self.schema_fingerprint {
            return Err(LearnError::SchemaMismatch { expected: self.schema_fingerprint.clone(), found });
        }
        if self.kind() == ModelKind::StratifiedDummy {
            return Ok(self.dummy_scores(matrix.n_rows()));
        }
        Ok((0..matrix.n_rows()).into_par_iter().map(|i| self.score_row(matrix.row(i))).collect())
    }

    fn dummy_scores(&self, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < self.prior {
                    0.5 + 0.5 * rng.random::<f64>()
                } else {
                    0.5 * rng.random::<f64>()
                }
            })
            .collect()
    }

    /// Mean decrease in impurity per feature, normalised to sum to one.
    pub fn feature_importances(&self) -> Result<Vec<f64>, LearnError> {
        if self.kind() == ModelKind::StratifiedDummy {
            return Err(LearnError::NotTreeBased(self.kind()));
        }
        let mut total = vec![0.0; self.n_features];
        for (t, tree) in self.trees.iter().enumerate() {
            let gains = tree.split_gains(self.n_features);
            let sum: f64 = gains.iter().sum();
            if sum <= 0.0 {
                continue;
            }
            let w = self.tree_weights.get(t).copied().unwrap_or(1.0);
            for (acc, g) in total.iter_mut().zip(gains) {
                *acc += w * g / sum;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        Ok(total)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, LearnError> {
        Ok(artifact::encode(MODEL_MAGIC, MODEL_VERSION, self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LearnError> {
        Ok(artifact::decode(MODEL_MAGIC, MODEL_VERSION, bytes)?)
    }

    /// Human-readable `key = value` summary stored next to the binary artifact.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("model = {}\n", self.spec.id()));
        s.push_str(&format!("kind = {}\n", self.kind()));
        s.push_str(&format!("spec = {}\n", serde_json::to_string(&self.spec).unwrap_or_default()));
        s.push_str(&format!("settings = {}\n", serde_json::to_string(&self.settings).unwrap_or_default()));
        s.push_str(&format!("trees = {}\n", self.trees.len()));
        s.push_str(&format!("schema = {}\n", self.schema_fingerprint));
        s.push_str(&format!("features = {}\n", self.n_features));
        s.push_str(&format!("fold = {}\n", self.fold_id.map_or("-".to_string(), |f| f.to_string())));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("prior = {}\n", self.prior));
        s
    }
}

/// Sums column importances by feature group.
pub fn group_importances(importances: &[f64], schema: &FeatureSchema) -> BTreeMap<FeatureGroup, f64> {
    let mut out = BTreeMap::new();
    for (c, v) in schema.columns().iter().zip(importances) {
        *out.entry(c.group).or_insert(0.0) += v;
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::matrix::Column;

    fn matrix(cols: usize, values: Vec<f64>) -> FeatureMatrix {
        let schema = FeatureSchema::new(
            (0..cols).map(|j| Column { name: format!("f{j}"), group: FeatureGroup::Weather }).collect(),
        )
        .unwrap();
        let n = values.len() / cols;
        FeatureMatrix::new(Arc::new(schema), (0..n).map(|i| i.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn dummy_prior_controls_high_scores() {
        let m = matrix(1, vec![0.0; 100_000]);
        let labels: Vec<bool> = (0..100).map(|i| i < 25).collect();
        let d = fit_dummy(m.schema(), &labels, 3).unwrap();
        let s = d.predict_scores(&m).unwrap();
        let frac = s.iter().filter(|&&v| v >= 0.5).count() as f64 / s.len() as f64;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s, d.predict_scores(&m).unwrap());

        let all = fit_dummy(m.schema(), &[true; 4], 3).unwrap();
        assert!(all.predict_scores(&m).unwrap().iter().all(|&v| v >= 0.5));
        assert!(matches!(all.feature_importances(), Err(LearnError::NotTreeBased(_))));
        assert!(matches!(fit_dummy(m.schema(), &[], 1), Err(LearnError::Empty)));
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let m = matrix(1, vec![1.0, 2.0, 3.0, 4.0]);
        let e = fit_model(
            &ModelSpec::DecisionTree { max_depth: Some(1) },
            &LearnerSettings::default(),
            &m,
            &[false, false, true, true],
            1,
        )
        .unwrap();
        let other = matrix(2, vec![1.0; 4]);
        assert!(matches!(e.predict_scores(&other), Err(LearnError::SchemaMismatch { .. })));
        assert!(e.predict_scores(&FeatureMatrix::empty(m.schema_arc())).unwrap().is_empty());
    }

    #[test]
    fn single_split_importance_is_one() {
        let m = matrix(2, vec![1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0, 7.0]);
        let settings = LearnerSettings { min_samples_leaf: 1, ..LearnerSettings::default() };
        let e =
            fit_model(&ModelSpec::DecisionTree { max_depth: Some(1) }, &settings, &m, &[false, false, true, true], 1)
                .unwrap();
        assert_eq!(e.feature_importances().unwrap(), vec![1.0, 0.0]);
        let groups = group_importances(&e.feature_importances().unwrap(), m.schema());
        assert_eq!(groups[&FeatureGroup::Weather], 1.0);
    }

    #[test]
    fn artifact_round_trip() {
        let m = matrix(1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let spec = ModelSpec::RandomForest { n_estimators: 3, max_depth: Some(2) };
        let settings = LearnerSettings { min_samples_leaf: 1, ..LearnerSettings::default() };
        let e = fit_model(&spec, &settings, &m, &[false, false, true, true, false, true], 9).unwrap();
        let back = TrainedEnsemble::from_bytes(&e.to_bytes().unwrap()).unwrap();
        assert_eq!(back, e);
        assert!(e.manifest().contains("model = rf-n3-d2"));
    }

    #[test]
    fn spec_ids() {
        assert_eq!(ModelSpec::ExtraTrees { n_estimators: 100, max_depth: None }.id(), "et-n100-dnone");
        assert_eq!(ModelSpec::AdaBoost { n_estimators: 500, learning_rate: 0.1 }.id(), "ada-n500-lr0.1");
    }
}
