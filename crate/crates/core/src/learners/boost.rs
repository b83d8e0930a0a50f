use super::tree::{grow_tree, predict_dataset, Dataset, LeafSmoothing, MaxFeatures, SplitMode, TreeParams};
use super::{check_labels, tree_rng, LearnError, LearnerSettings, ModelSpec, TrainedEnsemble};
use crate::matrix::FeatureMatrix;

const MIN_ERROR: f64 = 1e-10;

/// Discrete AdaBoost over shallow trees.
///
/// The first accepted round votes with weight ln((1-e)/e); later rounds are
/// shrunk by `learning_rate`. Boosting stops early on a round with weighted
/// error >= 0.5 (discarded) or exactly 0 (kept).
pub fn fit_adaboost(
    matrix: &FeatureMatrix,
    labels: &[bool],
    n_estimators: usize,
    learning_rate: f64,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<TrainedEnsemble, LearnError> {
    let prior = check_labels(matrix, labels)?;
    if prior == 0.0 || prior == 1.0 {
        return Err(LearnError::SingleClass);
    }
    if n_estimators == 0 || learning_rate.is_nan() || learning_rate < 0.0 || settings.boost_base_depth == 0 {
        return Err(LearnError::InvalidParam(format!(
            "n_estimators {n_estimators}, learning_rate {learning_rate}, base depth {}",
            settings.boost_base_depth
        )));
    }
    let params = TreeParams {
        max_depth: Some(settings.boost_base_depth),
        min_samples_leaf: 1,
        max_features: MaxFeatures::All,
        split_mode: SplitMode::Exhaustive,
        smoothing: LeafSmoothing::None,
    };
    let data = Dataset::new(matrix, labels)?;
    let n = data.n_rows();
    let mut weights = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for round in 0..n_estimators {
        let mut rng = tree_rng(seed, round);
        let tree = grow_tree(&data, &weights, &params, &mut rng);
        let miss: Vec<bool> =
            predict_dataset(&tree, &data).iter().zip(data.labels()).map(|(&s, &y)| (s >= 0.5) != y).collect();
        let total: f64 = weights.iter().sum();
        let err: f64 = weights.iter().zip(&miss).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / total;
        if err >= 0.5 {
            break;
        }
        let e = err.max(MIN_ERROR);
        let raw = ((1.0 - e) / e).ln();
        let alpha = if round == 0 { raw } else { learning_rate * raw };
        trees.push(tree);
        alphas.push(alpha);
        if err <= 0.0 {
            break;
        }
        for (w, &m) in weights.iter_mut().zip(&miss) {
            if m {
                *w *= alpha.exp();
            }
        }
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
    }
    Ok(TrainedEnsemble {
        spec: ModelSpec::AdaBoost { n_estimators, learning_rate },
        settings: *settings,
        trees,
        tree_weights: alphas,
        schema_fingerprint: matrix.schema().fingerprint(),
        n_features: matrix.n_cols(),
        fold_id: None,
        seed,
        prior,
    })
}
