use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streetrank_core::learners::{
    fit_adaboost, fit_dummy, fit_forest, fit_model, fit_tree, tree_rng, LeafSmoothing, LearnerSettings, MaxFeatures,
    ModelSpec, TreeNode, TreeParams,
};
use streetrank_core::matrix::{Column, FeatureGroup, FeatureMatrix, FeatureSchema};

fn matrix(cols: usize, values: Vec<f64>) -> FeatureMatrix {
    let schema =
        FeatureSchema::new((0..cols).map(|j| Column { name: format!("x{j}"), group: FeatureGroup::Weather }).collect())
            .unwrap();
    let n = values.len() / cols;
    FeatureMatrix::new(Arc::new(schema), (0..n).map(|i| format!("a{i}")).collect(), values).unwrap()
}

fn exact() -> LearnerSettings {
    LearnerSettings { min_samples_leaf: 1, smoothing: LeafSmoothing::None, ..LearnerSettings::default() }
}

fn gini_of(labels: &[bool], rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let pos = rows.iter().filter(|&&i| labels[i]).count() as f64;
    let n = rows.len() as f64;
    1.0 - (pos / n).powi(2) - ((n - pos) / n).powi(2)
}

fn partition_impurity(labels: &[bool], left: &[usize], right: &[usize]) -> f64 {
    let n = (left.len() + right.len()) as f64;
    left.len() as f64 / n * gini_of(labels, left) + right.len() as f64 / n * gini_of(labels, right)
}

/// Brute-force minimum over every feature and every cut between distinct values.
fn oracle_best(m: &FeatureMatrix, labels: &[bool]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for j in 0..m.n_cols() {
        let col = m.column(j);
        let mut vals = col.clone();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let (l, r): (Vec<usize>, Vec<usize>) = (0..m.n_rows()).partition(|&i| col[i] <= w[0]);
            let imp = partition_impurity(labels, &l, &r);
            best = Some(best.map_or(imp, |b: f64| b.min(imp)));
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn root_split_attains_global_gini_minimum(
        rows in 2usize..=30,
        cols in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0..6) as f64).collect();
        let labels: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.4)).collect();
        let m = matrix(cols, values);
        let params = TreeParams { max_depth: Some(1), min_samples_leaf: 1, smoothing: LeafSmoothing::None, ..TreeParams::default() };
        let tree = fit_tree(&m, &labels, &params, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let all: Vec<usize> = (0..rows).collect();
        let parent = gini_of(&labels, &all);
        match (tree.root(), oracle_best(&m, &labels)) {
            (TreeNode::Split { feature, threshold, .. }, Some(best)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = (0..rows).partition(|&i| m.get(i, *feature) <= *threshold);
                let chosen = partition_impurity(&labels, &l, &r);
                prop_assert!((chosen - best).abs() < 1e-12, "chosen {chosen} best {best}");
            }
            (TreeNode::Leaf { .. }, best) => {
                // no split may improve on the parent
                prop_assert!(best.is_none_or(|b| b >= parent - 1e-12));
            }
            (TreeNode::Split { .. }, None) => prop_assert!(false, "split without a candidate"),
        }
    }

    #[test]
    fn monotone_transform_leaves_training_scores_unchanged(
        rows in 5usize..40,
        seed in any::<u64>(),
        depth in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..rows * 2).map(|_| rng.random_range(-5.0..5.0)).collect();
        let labels: Vec<bool> = (0..rows).map(|_| rng.random_bool(0.5)).collect();
        let a = matrix(2, values.clone());
        let transformed: Vec<f64> = values.iter().enumerate()
            .map(|(k, &v)| if k % 2 == 0 { v.exp() } else { 3.0 * v + 1.0 })
            .collect();
        let b = matrix(2, transformed);
        let spec = ModelSpec::RandomForest { n_estimators: 5, max_depth: Some(depth) };
        // every tree sees every row, so no row falls strictly between a split's neighbours
        let s = LearnerSettings { min_samples_leaf: 1, bootstrap: false, ..LearnerSettings::default() };
        let ea = fit_model(&spec, &s, &a, &labels, seed).unwrap();
        let eb = fit_model(&spec, &s, &b, &labels, seed).unwrap();
        prop_assert_eq!(ea.predict_scores(&a).unwrap(), eb.predict_scores(&b).unwrap());
    }
}

#[test]
fn one_tree_forest_without_bootstrap_equals_single_tree() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..100).map(|i| values[i * 3] + values[i * 3 + 1] > 1.0).collect();
    let m = matrix(3, values);
    let settings = LearnerSettings { bootstrap: false, max_features: MaxFeatures::All, ..LearnerSettings::default() };
    let spec = ModelSpec::RandomForest { n_estimators: 1, max_depth: Some(4) };
    let forest = fit_forest(&m, &labels, &spec, &settings, 11).unwrap();
    let params = TreeParams { max_depth: Some(4), ..TreeParams::default() };
    let tree = fit_tree(&m, &labels, &params, &mut tree_rng(11, 0)).unwrap();
    let single: Vec<f64> = (0..m.n_rows()).map(|i| tree.predict(m.row(i))).collect();
    assert_eq!(forest.predict_scores(&m).unwrap(), single);
}

#[test]
fn forests_are_identical_across_worker_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..400).map(|i| values[i * 5] > 0.6 || rng.random_bool(0.1)).collect();
    let m = matrix(5, values);
    for spec in [
        ModelSpec::RandomForest { n_estimators: 20, max_depth: None },
        ModelSpec::ExtraTrees { n_estimators: 20, max_depth: Some(6) },
    ] {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fit_model(&spec, &LearnerSettings::default(), &m, &labels, 99).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a.predict_scores(&m).unwrap(), b.predict_scores(&m).unwrap());
    }
}

#[test]
fn unlimited_tree_reproduces_training_purities_and_permutes_with_rows() {
    let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
    let labels: Vec<bool> = (0..20).map(|i| (i * 13) % 3 == 0).collect();
    let m = matrix(1, x);
    let e = fit_model(&ModelSpec::DecisionTree { max_depth: None }, &exact(), &m, &labels, 0).unwrap();
    let scores = e.predict_scores(&m).unwrap();
    let expect: Vec<f64> = labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    assert_eq!(scores, expect);

    let perm: Vec<usize> = (0..20).rev().collect();
    let permuted = e.predict_scores(&m.select_rows(&perm)).unwrap();
    assert_eq!(permuted, perm.iter().map(|&i| scores[i]).collect::<Vec<_>>());
}

#[test]
fn adaboost_stops_after_a_perfect_round() {
    let m = matrix(1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let labels = [false, false, false, true, true, true];
    let e = fit_adaboost(&m, &labels, 50, 0.5, &LearnerSettings::default(), 1).unwrap();
    assert_eq!(e.trees.len(), 1);
    let scores = e.predict_scores(&m).unwrap();
    for (s, y) in scores.iter().zip(labels) {
        assert_eq!(*s >= 0.5, y, "{s}");
        assert!(*s != 0.5);
    }
}

#[test]
fn adaboost_zero_rate_matches_first_round() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let values: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..200).map(|i| (values[i * 2] > 0.5) != rng.random_bool(0.2)).collect();
    let m = matrix(2, values);
    let s = LearnerSettings::default();
    let many = fit_adaboost(&m, &labels, 30, 0.0, &s, 3).unwrap();
    let one = fit_adaboost(&m, &labels, 1, 0.0, &s, 3).unwrap();
    assert!(many.trees.len() > 1);
    assert_eq!(many.predict_scores(&m).unwrap(), one.predict_scores(&m).unwrap());
}

#[test]
fn adaboost_rejects_single_class() {
    let m = matrix(1, vec![1.0, 2.0]);
    assert!(fit_adaboost(&m, &[true, true], 5, 1.0, &LearnerSettings::default(), 0).is_err());
}

fn xor_fixture() -> (FeatureMatrix, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..200 {
        let (a, b): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        values.extend([a, b]);
        labels.push((a > 0.0) != (b > 0.0));
    }
    (matrix(2, values), labels)
}

fn accuracy(scores: &[f64], labels: &[bool]) -> f64 {
    scores.iter().zip(labels).filter(|(s, y)| (**s >= 0.5) == **y).count() as f64 / labels.len() as f64
}

#[test]
fn adaboost_depth_two_learns_xor() {
    let (m, labels) = xor_fixture();
    let s = LearnerSettings { boost_base_depth: 2, ..LearnerSettings::default() };
    let e = fit_adaboost(&m, &labels, 50, 1.0, &s, 0).unwrap();
    let acc = accuracy(&e.predict_scores(&m).unwrap(), &labels);
    assert!(acc > 0.9, "accuracy {acc}");
}

#[test]
fn adaboost_stumps_cannot_represent_xor() {
    // a weighted vote of single-feature stumps is additive in the features
    let (m, labels) = xor_fixture();
    let e = fit_adaboost(&m, &labels, 50, 1.0, &LearnerSettings::default(), 0).unwrap();
    let acc = accuracy(&e.predict_scores(&m).unwrap(), &labels);
    assert!(acc < 0.9, "accuracy {acc}");
}

#[test]
fn adaboost_accepted_rounds_have_error_below_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let values: Vec<f64> = (0..900).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> =
        (0..300).map(|i| (values[i * 3] + 0.5 * values[i * 3 + 2] > 0.8) != rng.random_bool(0.15)).collect();
    let m = matrix(3, values);
    let e = fit_adaboost(&m, &labels, 40, 0.5, &LearnerSettings::default(), 5).unwrap();
    let n = labels.len();
    let mut w = vec![1.0 / n as f64; n];
    for (tree, &alpha) in e.trees.iter().zip(&e.tree_weights) {
        let miss: Vec<bool> = (0..n).map(|i| (tree.predict(m.row(i)) >= 0.5) != labels[i]).collect();
        let total: f64 = w.iter().sum();
        let err: f64 = (0..n).filter(|&i| miss[i]).map(|i| w[i]).sum::<f64>() / total;
        assert!(err < 0.5, "round error {err}");
        for i in 0..n {
            if miss[i] {
                w[i] *= alpha.exp();
            }
        }
    }
}

#[test]
fn dummy_precision_matches_pool_base_rate() {
    let pool = 1000;
    let labels: Vec<bool> = (0..pool).map(|i| i % 5 == 0).collect();
    let m = matrix(1, vec![0.0; pool]);
    let k = 100;
    let mut total = 0.0;
    for seed in 0..1000u64 {
        let d = fit_dummy(m.schema(), &[true, false, false, false], seed).unwrap();
        let scores = d.predict_scores(&m).unwrap();
        let mut idx: Vec<usize> = (0..pool).collect();
        idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        total += idx[..k].iter().filter(|&&i| labels[i]).count() as f64 / k as f64;
    }
    let mean = total / 1000.0;
    assert!((mean - 0.2).abs() < 0.01, "mean precision {mean}");
}

#[test]
fn importances_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let values: Vec<f64> = (0..1200).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<bool> = (0..300).map(|i| values[i * 4 + 1] > 0.5).collect();
    let m = matrix(4, values);
    for spec in [
        ModelSpec::RandomForest { n_estimators: 10, max_depth: Some(3) },
        ModelSpec::ExtraTrees { n_estimators: 10, max_depth: None },
        ModelSpec::AdaBoost { n_estimators: 10, learning_rate: 0.5 },
    ] {
        let e = fit_model(&spec, &LearnerSettings::default(), &m, &labels, 3).unwrap();
        let imp = e.feature_importances().unwrap();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let top = imp.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(top, 1, "{spec:?} {imp:?}");
    }
}
