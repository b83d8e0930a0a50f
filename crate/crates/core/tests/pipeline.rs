use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use streetrank_core::artifact::sha256_hex;
use streetrank_core::learners::{HyperGrid, ModelSpec};
use streetrank_core::matrix::FeatureGroup;
use streetrank_core::pipeline::{
    cmd_evaluate, cmd_featurize, cmd_report, cmd_synth, cmd_train, run_all, ExperimentConfig, Layout, PipelineError,
    TrainOptions, TrainOutcome,
};

fn small_config(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { out_dir: out.to_path_buf(), ..ExperimentConfig::default() };
    cfg.corpus.synthetic.base_monthly_volume = 120;
    cfg.grid = HyperGrid::single(ModelSpec::RandomForest { n_estimators: 15, max_depth: Some(4) }, true);
    cfg.k_ladder = vec![10, 50, 100];
    cfg.evaluation.auto_referral_min_support = 5;
    cfg
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_under(&p, out);
        } else {
            out.push(p);
        }
    }
}

/// Relative path -> SHA-256 of every report file.
fn report_hashes(out: &Path) -> BTreeMap<String, String> {
    let root = Layout::new(out).reports();
    let mut files = Vec::new();
    files_under(&root, &mut files);
    files
        .into_iter()
        .map(|p| {
            let rel = p.strip_prefix(&root).unwrap().to_string_lossy().into_owned();
            (rel, sha256_hex(&std::fs::read(&p).unwrap()))
        })
        .collect()
}

#[test]
fn interrupted_training_resumes_to_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path());
    run_all(&cfg).unwrap();
    let straight = report_hashes(a.path());
    assert!(straight.contains_key("summary.txt") && straight.contains_key("quadrants.csv"));

    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(b.path());
    cmd_synth(&cfg).unwrap();
    cmd_featurize(&cfg).unwrap();
    let out = cmd_train(&cfg, &TrainOptions { stop_after: Some(5) }).unwrap();
    assert_eq!(out, TrainOutcome::Interrupted { trained: 5 });
    // evaluation refuses to run on a half-trained grid
    assert_eq!(cmd_evaluate(&cfg).unwrap_err().exit_code(), 2);
    match cmd_train(&cfg, &TrainOptions::default()).unwrap() {
        TrainOutcome::Complete { trained, skipped } => {
            assert_eq!(skipped, 5);
            // 14 folds x (2 targets x 2 grid points + 1 permuted-label model)
            assert_eq!(trained + skipped, 14 * 5);
        }
        other => panic!("expected completion, got {other:?}"),
    }
    cmd_evaluate(&cfg).unwrap();
    cmd_report(&cfg).unwrap();
    assert_eq!(report_hashes(b.path()), straight);

    // a finished run retrains nothing
    assert_eq!(cmd_train(&cfg, &TrainOptions::default()).unwrap(), TrainOutcome::Complete { trained: 0, skipped: 70 });
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut one = small_config(a.path());
    one.workers = 1;
    let mut two = small_config(b.path());
    two.workers = 2;
    assert_eq!(one.config_hash(), two.config_hash());
    run_all(&one).unwrap();
    run_all(&two).unwrap();
    assert_eq!(report_hashes(a.path()), report_hashes(b.path()));
}

#[test]
fn excluding_a_group_removes_only_its_columns() {
    let full_dir = tempfile::tempdir().unwrap();
    let full = small_config(full_dir.path());
    cmd_synth(&full).unwrap();
    let full_manifest = cmd_featurize(&full).unwrap();

    let abl_dir = tempfile::tempdir().unwrap();
    let mut abl = small_config(abl_dir.path());
    abl.features.groups.remove(&FeatureGroup::Weather);
    // reuse the same corpus files
    abl.corpus.dir = Some(Layout::new(full_dir.path()).corpus());
    let abl_manifest = cmd_featurize(&abl).unwrap();
    assert_eq!(abl_manifest.corpus_hash, full_manifest.corpus_hash);

    let read = |dir: &Path| std::fs::read_to_string(Layout::new(dir).features().join("schema.csv")).unwrap();
    let full_cols: Vec<String> = read(full_dir.path()).lines().map(String::from).collect();
    let abl_cols: Vec<String> = read(abl_dir.path()).lines().map(String::from).collect();
    let expected: Vec<String> = full_cols.iter().filter(|l| !l.ends_with(",Weather")).cloned().collect();
    assert_eq!(abl_cols, expected);
    assert_eq!(full_cols.len() - abl_cols.len(), 8);

    cmd_train(&abl, &TrainOptions::default()).unwrap();
    cmd_evaluate(&abl).unwrap();
    cmd_report(&abl).unwrap();
    let summary = std::fs::read_to_string(Layout::new(abl_dir.path()).reports().join("summary.txt")).unwrap();
    assert!(summary.contains("feature groups excluded: Weather"), "{summary}");
}

#[test]
fn stages_report_missing_inputs_and_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    let code = |e: PipelineError| e.exit_code();
    assert_eq!(code(cmd_featurize(&cfg).unwrap_err()), 2);
    assert_eq!(code(cmd_report(&cfg).unwrap_err()), 2);
    cmd_synth(&cfg).unwrap();
    assert_eq!(code(cmd_train(&cfg, &TrainOptions::default()).unwrap_err()), 2);
    cmd_featurize(&cfg).unwrap();
    cmd_train(&cfg, &TrainOptions { stop_after: Some(1) }).unwrap();

    // a different learner config cannot resume this run
    cfg.learner.min_samples_leaf = 7;
    let err = cmd_train(&cfg, &TrainOptions::default()).unwrap_err();
    assert!(matches!(err, PipelineError::Conflict(_)), "{err}");
    assert_eq!(err.exit_code(), 2);

    // different feature settings need a new featurize
    let mut other = small_config(dir.path());
    other.features.duplicate_days = 3;
    assert_eq!(code(cmd_train(&other, &TrainOptions::default()).unwrap_err()), 2);

    let mut external = small_config(dir.path());
    external.corpus.dir = Some(dir.path().join("corpus"));
    assert_eq!(code(cmd_synth(&external).unwrap_err()), 2);
}
