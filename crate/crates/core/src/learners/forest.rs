use rand::Rng;
use rayon::prelude::*;

use super::tree::{grow_tree, Dataset, MaxFeatures, SplitMode, TreeParams};
use super::{check_labels, tree_rng, LearnError, LearnerSettings, ModelSpec, TrainedEnsemble};
use crate::matrix::FeatureMatrix;

/// Fits a random forest, extra-trees ensemble or single decision tree.
///
/// Random forests draw a bootstrap sample per tree; extra trees use every row with
/// random thresholds; a decision tree considers every feature at every node.
pub fn fit_forest(
    matrix: &FeatureMatrix,
    labels: &[bool],
    spec: &ModelSpec,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<TrainedEnsemble, LearnError> {
    let prior = check_labels(matrix, labels)?;
    let (n_estimators, max_depth, split_mode, bootstrap, max_features) = match *spec {
        ModelSpec::RandomForest { n_estimators, max_depth } => {
            (n_estimators, max_depth, SplitMode::Exhaustive, settings.bootstrap, settings.max_features)
        }
        ModelSpec::ExtraTrees { n_estimators, max_depth } => {
            (n_estimators, max_depth, SplitMode::RandomThreshold, false, settings.max_features)
        }
        ModelSpec::DecisionTree { max_depth } => (1, max_depth, SplitMode::Exhaustive, false, MaxFeatures::All),
        _ => return Err(LearnError::InvalidParam(format!("{} is not a tree ensemble", spec.id()))),
    };
    if n_estimators == 0 {
        return Err(LearnError::InvalidParam("n_estimators must be at least 1".into()));
    }
    let params = TreeParams {
        max_depth,
        min_samples_leaf: settings.min_samples_leaf,
        max_features,
        split_mode,
        smoothing: settings.smoothing,
    };
    let data = Dataset::new(matrix, labels)?;
    let n = data.n_rows();
    let trees = (0..n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(seed, t);
            let mut weights = vec![0.0; n];
            if bootstrap {
                for _ in 0..n {
                    weights[rng.random_range(0..n)] += 1.0;
                }
            } else {
                weights.iter_mut().for_each(|w| *w = 1.0);
            }
            grow_tree(&data, &weights, &params, &mut rng)
        })
        .collect();
    Ok(TrainedEnsemble {
        spec: *spec,
        settings: *settings,
        trees,
        tree_weights: Vec::new(),
        schema_fingerprint: matrix.schema().fingerprint(),
        n_features: matrix.n_cols(),
        fold_id: None,
        seed,
        prior,
    })
}
