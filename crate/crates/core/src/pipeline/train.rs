use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::features::{load_featurizer, prepare_checked, FoldArtifact, Prepared};
use super::scores::{write_scores, ScoreRow};
use super::{model_artifact_id, unit_seed, ExperimentConfig, Layout, PipelineError, Target};
use crate::learners::{fit_model, ModelSpec};
use crate::matrix::FeatureMatrix;
use crate::store::{ModelRegistry, RunRecord, RunRegistry, WorkUnit};

pub const NULL_TARGET: &str = "null";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop after this many newly trained units, as if interrupted.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainOutcome {
    Complete { trained: usize, skipped: usize },
    Interrupted { trained: usize },
}

/// The grid point used for the permuted-label importance check: the first non-baseline model.
pub(crate) fn null_spec(cfg: &ExperimentConfig) -> Option<ModelSpec> {
    cfg.grid.points().into_iter().find(|s| *s != ModelSpec::StratifiedDummy)
}

struct FoldData {
    fold_id: u32,
    train: FeatureMatrix,
    /// Positions in `train` with a known positive label, and those labels.
    po_rows: Vec<usize>,
    po_labels: Vec<bool>,
    referral_labels: Vec<bool>,
    test: FeatureMatrix,
    test_rows: Vec<ScoreRow>,
}

fn fold_data(
    cfg: &ExperimentConfig,
    layout: &Layout,
    prep: &Prepared,
    art: &FoldArtifact,
    j: usize,
) -> Result<FoldData, PipelineError> {
    let f = load_featurizer(layout, art)?;
    let rows = &prep.rows[j];
    let train_rows = prep.train_rows(j);
    let pos: HashMap<usize, usize> = train_rows.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let (po_rows, po_labels) = rows.train_positive.iter().map(|&(i, y)| (pos[&i], y)).unzip();
    let referral_labels = rows.train_referral.iter().map(|&(_, y)| y).collect();
    let alerts = &prep.loaded.corpus.alerts;
    let test_rows = rows
        .test
        .iter()
        .map(|t| ScoreRow {
            alert_id: alerts[t.index].id.clone(),
            created_at: alerts[t.index].created_at,
            score: f64::NAN,
            referral: t.referral,
            positive: t.positive,
        })
        .collect();
    let (train, test) = super::with_pool(cfg.workers, || {
        Ok::<_, PipelineError>((prep.matrix(&f, &train_rows)?, prep.matrix(&f, &prep.test_rows(j))?))
    })??;
    Ok(FoldData { fold_id: prep.plans[j].fold_id, train, po_rows, po_labels, referral_labels, test, test_rows })
}

fn fit_unit(
    cfg: &ExperimentConfig,
    data: &FoldData,
    po_train: &FeatureMatrix,
    target: &str,
    spec: &ModelSpec,
) -> Result<crate::learners::TrainedEnsemble, PipelineError> {
    let model_id = spec.id();
    let seed = unit_seed(cfg.seed, target, data.fold_id, &model_id);
    let fail = |e: crate::learners::LearnError| {
        PipelineError::Runtime(format!("fold {} {target} {model_id}: {e}", data.fold_id))
    };
    let mut model = match target {
        NULL_TARGET => {
            let mut labels = data.po_labels.clone();
            labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            fit_model(spec, &cfg.learner, po_train, &labels, seed).map_err(fail)?
        }
        t if t == Target::Referral.as_str() => {
            fit_model(spec, &cfg.learner, &data.train, &data.referral_labels, seed).map_err(fail)?
        }
        _ => fit_model(spec, &cfg.learner, po_train, &data.po_labels, seed).map_err(fail)?,
    };
    model.fold_id = Some(data.fold_id);
    Ok(model)
}

/// Fits every grid point for every fold and target, skipping units the run
/// registry already has.
pub fn cmd_train(cfg: &ExperimentConfig, opts: &TrainOptions) -> Result<TrainOutcome, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let (prep, manifest) = prepare_checked(cfg)?;
    let record = RunRecord {
        run_id: cfg.config_hash()[..12].to_string(),
        config_hash: cfg.config_hash(),
        corpus_hash: manifest.corpus_hash.clone(),
        folds: prep.plans.clone(),
        metric_paths: Vec::new(),
        artifact_paths: Vec::new(),
    };
    let registry = Mutex::new(RunRegistry::open(&layout.run(), record)?);
    let specs = cfg.grid.points();
    let null = if cfg.evaluation.null_check { null_spec(cfg) } else { None };

    let trained = AtomicUsize::new(0);
    let mut skipped = 0usize;
    let mut interrupted = false;
    for j in 0..prep.plans.len() {
        let fold_id = prep.plans[j].fold_id;
        let mut units: Vec<(String, ModelSpec)> = Vec::new();
        for t in &cfg.targets {
            units.extend(specs.iter().map(|s| (t.as_str().to_string(), *s)));
        }
        units.extend(null.iter().map(|s| (NULL_TARGET.to_string(), *s)));
        let pending: Vec<(String, ModelSpec)> = {
            let reg = registry.lock().expect("registry lock");
            units
                .into_iter()
                .filter(|(t, s)| !reg.is_done(&WorkUnit { target: t.clone(), fold_id, model_id: s.id() }))
                .collect()
        };
        skipped += specs.len() * cfg.targets.len() + usize::from(null.is_some()) - pending.len();
        if pending.is_empty() {
            continue;
        }
        if opts.stop_after.is_some_and(|n| trained.load(Ordering::SeqCst) >= n) {
            interrupted = true;
            break;
        }
        let data = fold_data(cfg, &layout, &prep, &manifest.folds[j], j)?;
        let po_train = data.train.select_rows(&data.po_rows);
        tracing::info!(fold = fold_id, units = pending.len(), train = data.train.n_rows(), "training");

        let results: Vec<Result<bool, PipelineError>> = super::with_pool(cfg.workers, || {
            pending
                .par_iter()
                .map(|(target, spec)| {
                    let slot = trained.fetch_add(1, Ordering::SeqCst);
                    if opts.stop_after.is_some_and(|n| slot >= n) {
                        return Ok(false);
                    }
                    let model = fit_unit(cfg, &data, &po_train, target, spec)?;
                    let model_id = spec.id();
                    let artifact = model_artifact_id(&model_id, fold_id);
                    if target == NULL_TARGET {
                        ModelRegistry::new(layout.null_models()).put_model(&artifact, &model)?;
                    } else {
                        let t = Target::parse(target).expect("configured target");
                        ModelRegistry::new(layout.models(t)).put_model(&artifact, &model)?;
                        let scores = model.predict_scores(&data.test).map_err(PipelineError::runtime)?;
                        let rows: Vec<ScoreRow> = data
                            .test_rows
                            .iter()
                            .zip(scores)
                            .map(|(r, score)| ScoreRow { score, ..r.clone() })
                            .collect();
                        write_scores(&layout.scores(t, &model_id, fold_id), &rows)?;
                    }
                    registry.lock().expect("registry lock").mark_done(WorkUnit {
                        target: target.clone(),
                        fold_id,
                        model_id,
                    })?;
                    Ok(true)
                })
                .collect()
        })?;
        for r in results {
            if !r? {
                interrupted = true;
            }
        }
        if interrupted {
            break;
        }
    }
    let n = trained.load(Ordering::SeqCst);
    let done = if let Some(limit) = opts.stop_after { n.min(limit) } else { n };
    if interrupted {
        tracing::warn!(trained = done, "training stopped early; rerun to resume");
        return Ok(TrainOutcome::Interrupted { trained: done });
    }
    Ok(TrainOutcome::Complete { trained: done, skipped })
}

/// Every unit the config asks for, for checking that training finished.
pub(crate) fn expected_units(cfg: &ExperimentConfig, fold_ids: &[u32]) -> Vec<WorkUnit> {
    let mut out = Vec::new();
    for &fold_id in fold_ids {
        for t in &cfg.targets {
            for s in cfg.grid.points() {
                out.push(WorkUnit { target: t.as_str().to_string(), fold_id, model_id: s.id() });
            }
        }
    }
    if let (true, Some(s)) = (cfg.evaluation.null_check, null_spec(cfg)) {
        out.extend(fold_ids.iter().map(|&fold_id| WorkUnit {
            target: NULL_TARGET.to_string(),
            fold_id,
            model_id: s.id(),
        }));
    }
    out
}
