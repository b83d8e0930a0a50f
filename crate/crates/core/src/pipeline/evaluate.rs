use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::features::{load_featurizer, read_manifest};
use super::report::ModelSelection;
use super::scores::{read_scores, ScoreRow};
use super::train::{expected_units, null_spec};
use super::{
    csv_bytes, load_corpus, model_artifact_id, write_file, write_json, ExperimentConfig, Layout, PipelineError, Target,
};
use crate::domain::{Alert, Positive};
use crate::evaluate::report::{
    fmt_opt, ranked_groups, write_bias_csv, write_importances_csv, write_jaccard_csv, write_metrics_csv,
    write_quadrants_csv, write_uplift_csv, PlotData, ScatterPoint,
};
use crate::evaluate::{
    baseline_compare, bias_slices, jaccard_matrix, metrics_at_k, metrics_ladder, quadrant_report, rank_order,
    summarize_uplift, top_k_ids, AtK, BaselineMonth, Demographics, FoldMetrics, MetricsTable, QuadrantAlert,
    QuadrantReport, ScoredAlert, UpliftRow, UpliftSummary,
};
use crate::learners::{group_importances, ModelSpec};
use crate::matrix::{FeatureGroup, FeatureSchema};
use crate::store::{ModelRegistry, RunRegistry};
use crate::synthgen::manual_baselines;
use crate::tempcv::FoldPlan;
use crate::textmine::word_count;

pub const EVALUATION_FILE: &str = "evaluation.json";

/// Models and threshold the service should load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingChoice {
    pub fold_id: u32,
    pub featurizer: String,
    pub po_model: String,
    pub referral_model: Option<String>,
    /// Absent when no cut-off reaches the target precision; auto-referral is then off.
    pub auto_referral_threshold: Option<f64>,
    pub threshold_precision: Option<f64>,
    pub threshold_k: Option<usize>,
}

/// Everything the summary report needs, written as `reports/evaluation.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub config_hash: String,
    pub corpus_hash: String,
    pub folds: usize,
    pub columns: usize,
    pub disabled_groups: Vec<FeatureGroup>,
    pub leakage_offenders: usize,
    pub best: Vec<ModelSelection>,
    /// Baseline comparison of the chosen positive-outcome model.
    pub uplift: Option<UpliftSummary>,
    pub null_check: Option<NullCheck>,
    pub serving: ServingChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullGroup {
    pub group: FeatureGroup,
    pub importance: f64,
    /// Share of columns in the group: its importance if every column were equally useful.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCheck {
    pub model: String,
    pub groups: Vec<NullGroup>,
}

impl NullCheck {
    /// Every group stays below twice its uniform floor.
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.importance < 2.0 * g.floor)
    }
}

/// Compares permuted-label group importances with each group's column share.
pub fn null_importance_check(model: &str, importances: &[f64], schema: &FeatureSchema) -> NullCheck {
    let p = schema.len() as f64;
    let imp = group_importances(importances, schema);
    let mut counts: BTreeMap<FeatureGroup, usize> = BTreeMap::new();
    for c in schema.columns() {
        *counts.entry(c.group).or_default() += 1;
    }
    let groups = counts
        .into_iter()
        .map(|(group, n)| NullGroup { group, importance: imp.get(&group).copied().unwrap_or(0.0), floor: n as f64 / p })
        .collect();
    NullCheck { model: model.to_string(), groups }
}

/// Lowest score whose cut-off (all alerts scoring at least that much) still has
/// precision >= `precision` over at least `min_support` labelled alerts.
/// Returns (threshold, precision, k).
pub fn auto_referral_threshold(
    alerts: &[ScoredAlert],
    precision: f64,
    min_support: usize,
) -> Option<(f64, f64, usize)> {
    let order = rank_order(alerts);
    let (mut found, mut not_found) = (0usize, 0usize);
    let mut best = None;
    for (pos, &i) in order.iter().enumerate() {
        match alerts[i].label {
            Positive::Yes => found += 1,
            Positive::No => not_found += 1,
            Positive::Null => {}
        }
        // only cut between distinct scores so ">= threshold" selects exactly this prefix
        let boundary = order.get(pos + 1).is_none_or(|&n| alerts[n].score < alerts[i].score);
        let labelled = found + not_found;
        if boundary && labelled >= min_support.max(1) {
            let p = found as f64 / labelled as f64;
            if p >= precision {
                best = Some((alerts[i].score, p, pos + 1));
            }
        }
    }
    best
}

struct ModelScores {
    /// Per fold, in fold order.
    folds: Vec<Vec<ScoreRow>>,
}

fn month_baseline(baselines: &[BaselineMonth], plan: &FoldPlan) -> Option<BaselineMonth> {
    baselines.iter().find(|b| b.month == plan.test_month()).cloned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct Matched {
    pub target: Target,
    pub model: String,
    pub found_rate: Option<f64>,
    pub recall: Option<f64>,
}

fn mean(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = v.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Models ordered best first: found rate at the matched k, then recall, then id.
pub(crate) fn rank_models(mut rows: Vec<Matched>) -> Vec<Matched> {
    let key = |v: Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
    rows.sort_by(|a, b| {
        key(b.found_rate)
            .total_cmp(&key(a.found_rate))
            .then(key(b.recall).total_cmp(&key(a.recall)))
            .then_with(|| a.model.cmp(&b.model))
    });
    rows
}

fn demographics(alerts: &HashMap<&str, &Alert>, rows: &[ScoreRow]) -> Vec<Demographics> {
    rows.iter()
        .map(|r| {
            let a = alerts[r.alert_id.as_str()];
            Demographics { gender: a.gender, age_band: a.age_band }
        })
        .collect()
}

fn alert_words(a: &Alert) -> usize {
    [&a.location_text, &a.appearance_text, &a.concerns_text].iter().map(|t| word_count(t.as_deref())).sum()
}

/// Metrics, baseline comparison, model selection, quadrants, similarity, bias,
/// importances and the service hand-off, all written under `<out>/reports`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluationSummary, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let manifest = read_manifest(&layout)?;
    let fold_ids: Vec<u32> = manifest.plans.iter().map(|p| p.fold_id).collect();
    {
        let reg = RunRegistry::open(
            &layout.run(),
            crate::store::RunRecord {
                run_id: cfg.config_hash()[..12].to_string(),
                config_hash: cfg.config_hash(),
                corpus_hash: manifest.corpus_hash.clone(),
                folds: manifest.plans.clone(),
                metric_paths: Vec::new(),
                artifact_paths: Vec::new(),
            },
        )?;
        let missing = expected_units(cfg, &fold_ids).into_iter().filter(|u| !reg.is_done(u)).count();
        if missing > 0 {
            return Err(PipelineError::Validation(format!(
                "training is incomplete ({missing} units left); run `train`"
            )));
        }
    }
    let loaded = load_corpus(cfg)?;
    if loaded.hash != manifest.corpus_hash {
        return Err(PipelineError::Validation("the corpus changed since `featurize`; rerun it".into()));
    }
    let alerts: HashMap<&str, &Alert> = loaded.corpus.alerts.iter().map(|a| (a.id.as_str(), a)).collect();
    let baselines = manual_baselines(&loaded.corpus.alerts, &loaded.corpus.outcomes);
    let reports = layout.reports();

    let bl = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["month", "referral_count", "found_count", "found_rate"])?;
        for m in &baselines {
            w.write_record([
                m.month.format("%Y-%m").to_string(),
                m.referral_count.to_string(),
                m.found_count.to_string(),
                fmt_opt(m.found_rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_file(&reports.join("baselines.csv"), &bl)?;

    let specs = cfg.grid.points();
    let mut scores: BTreeMap<(Target, String), ModelScores> = BTreeMap::new();
    for &t in &cfg.targets {
        for s in &specs {
            let folds =
                fold_ids.iter().map(|&f| read_scores(&layout.scores(t, &s.id(), f))).collect::<Result<Vec<_>, _>>()?;
            scores.insert((t, s.id()), ModelScores { folds });
        }
    }

    // metrics tables, matched-k metrics and uplift
    let mut matched = Vec::new();
    let mut curves = Vec::new();
    let mut pool_rows = Vec::new();
    let mut uplifts: BTreeMap<String, UpliftSummary> = BTreeMap::new();
    for ((t, model), ms) in &scores {
        let mut fold_metrics = Vec::new();
        let mut at_match: Vec<Option<AtK>> = Vec::new();
        let mut uplift: Vec<UpliftRow> = Vec::new();
        for (plan, rows) in manifest.plans.iter().zip(&ms.folds) {
            let scored: Vec<ScoredAlert> = rows.iter().map(|r| r.scored(*t)).collect();
            let ladder = metrics_ladder(&scored, &cfg.k_ladder).map_err(PipelineError::runtime)?;
            fold_metrics.push(FoldMetrics { fold_id: plan.fold_id, pool_size: scored.len(), rows: ladder });
            let b = month_baseline(&baselines, plan);
            let k = b.as_ref().map_or(0, |b| b.referral_count);
            at_match.push(if k > 0 { Some(metrics_at_k(&scored, k).map_err(PipelineError::runtime)?) } else { None });
            if *t == Target::PositiveOutcome && b.is_some() {
                uplift.push(
                    baseline_compare(plan.fold_id, plan.test_month(), &scored, &baselines)
                        .map_err(PipelineError::runtime)?,
                );
            }
            if *t == Target::PositiveOutcome && model == "dummy" {
                let found = scored.iter().filter(|a| a.label == Positive::Yes).count();
                pool_rows.push((plan.fold_id, scored.len(), found, at_match.last().cloned().flatten()));
            }
        }
        let table = MetricsTable::new(cfg.k_ladder.clone(), fold_metrics);
        write_file(
            &reports.join("metrics").join(t.as_str()).join(format!("{model}.csv")),
            &csv_bytes(|b| write_metrics_csv(&table, b))?,
        )?;
        if *t == Target::PositiveOutcome {
            let summary = summarize_uplift(&uplift);
            write_file(
                &reports.join("uplift").join(format!("{model}.csv")),
                &csv_bytes(|b| write_uplift_csv(&uplift, &summary, b))?,
            )?;
            uplifts.insert(model.clone(), summary);
        }
        curves.push(PlotData::curve_from(model, t.as_str(), &table));
        matched.push(Matched {
            target: *t,
            model: model.clone(),
            found_rate: mean(at_match.iter().map(|m| m.as_ref().and_then(|m| m.found_rate))),
            recall: mean(at_match.iter().map(|m| m.as_ref().and_then(|m| m.recall))),
        });
    }

    if !pool_rows.is_empty() {
        let bytes = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["fold", "pool_size", "pool_found", "pool_found_rate", "k", "dummy_found_rate"])?;
            for (fold, n, found, at) in &pool_rows {
                w.write_record([
                    fold.to_string(),
                    n.to_string(),
                    found.to_string(),
                    fmt_opt((*n > 0).then(|| *found as f64 / *n as f64)),
                    at.as_ref().map_or(String::new(), |a| a.k_used.to_string()),
                    fmt_opt(at.as_ref().and_then(|a| a.found_rate)),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_file(&reports.join("pool_rates.csv"), &bytes)?;
    }

    let mut best: BTreeMap<Target, String> = BTreeMap::new();
    let mut selections = Vec::new();
    let sel = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["target", "rank", "model", "matched_found_rate", "matched_recall"])?;
        for &t in &cfg.targets {
            let ranked = rank_models(matched.iter().filter(|m| m.target == t).cloned().collect());
            if let Some(first) = ranked.first() {
                best.insert(t, first.model.clone());
                selections.push(ModelSelection {
                    target: t,
                    model: first.model.clone(),
                    matched_found_rate: first.found_rate,
                    matched_recall: first.recall,
                });
            }
            for (i, m) in ranked.iter().enumerate() {
                w.write_record([
                    t.as_str().to_string(),
                    (i + 1).to_string(),
                    m.model.clone(),
                    fmt_opt(m.found_rate),
                    fmt_opt(m.recall),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    write_file(&reports.join("selection.csv"), &sel)?;

    let last_art = manifest.folds.last().ok_or_else(|| PipelineError::Validation("no folds".into()))?;
    let schema = load_featurizer(&layout, last_art)?.schema().clone();

    // grouped importances of each target's best model, averaged over folds
    let mut plot_groups = Vec::new();
    for (&t, model) in &best {
        if model == "dummy" {
            continue;
        }
        let reg = ModelRegistry::new(layout.models(t));
        let mut total = vec![0.0; schema.len()];
        for &f in &fold_ids {
            let m = reg.get_model(&model_artifact_id(model, f))?;
            let imp = m.feature_importances().map_err(PipelineError::runtime)?;
            total.iter_mut().zip(imp).for_each(|(a, v)| *a += v / fold_ids.len() as f64);
        }
        let groups = group_importances(&total, &schema);
        write_file(
            &reports.join(format!("importances_{}.csv", t.as_str())),
            &csv_bytes(|b| write_importances_csv(&groups, b))?,
        )?;
        if t == Target::PositiveOutcome || plot_groups.is_empty() {
            plot_groups = ranked_groups(&groups);
        }
    }

    let mut null_check = None;
    if let (true, Some(spec)) = (cfg.evaluation.null_check, null_spec(cfg)) {
        let reg = ModelRegistry::new(layout.null_models());
        let mut imp = vec![0.0; schema.len()];
        for &f in &fold_ids {
            let m = reg.get_model(&model_artifact_id(&spec.id(), f))?;
            let fi = m.feature_importances().map_err(PipelineError::runtime)?;
            imp.iter_mut().zip(fi).for_each(|(a, v)| *a += v / fold_ids.len() as f64);
        }
        let check = null_importance_check(&spec.id(), &imp, &schema);
        let bytes = csv_bytes(|b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(["group", "importance", "floor", "ratio", "below_twice_floor"])?;
            for g in &check.groups {
                w.write_record([
                    g.group.to_string(),
                    format!("{:.6}", g.importance),
                    format!("{:.6}", g.floor),
                    format!("{:.4}", g.importance / g.floor),
                    (g.importance < 2.0 * g.floor).to_string(),
                ])?;
            }
            w.flush()?;
            Ok(())
        })?;
        write_file(&reports.join("importances_null.csv"), &bytes)?;
        null_check = Some(check);
    }

    // Jaccard similarity of the positive-outcome models' top-k sets, averaged over folds
    if cfg.targets.contains(&Target::PositiveOutcome) {
        let names: Vec<String> = specs.iter().map(ModelSpec::id).collect();
        let mut avg = vec![vec![0.0; names.len()]; names.len()];
        let mut n = 0usize;
        for (j, plan) in manifest.plans.iter().enumerate() {
            let Some(b) = month_baseline(&baselines, plan).filter(|b| b.referral_count > 0) else { continue };
            let sets: Vec<BTreeSet<String>> = names
                .iter()
                .map(|m| {
                    let rows = &scores[&(Target::PositiveOutcome, m.clone())].folds[j];
                    let scored: Vec<ScoredAlert> = rows.iter().map(|r| r.scored(Target::PositiveOutcome)).collect();
                    top_k_ids(&scored, b.referral_count)
                })
                .collect();
            let m = jaccard_matrix(&sets);
            for (a, row) in avg.iter_mut().zip(m) {
                for (x, v) in a.iter_mut().zip(row) {
                    *x += v;
                }
            }
            n += 1;
        }
        if n > 0 {
            avg.iter_mut().flatten().for_each(|v| *v /= n as f64);
        }
        write_file(&reports.join("jaccard.csv"), &csv_bytes(|b| write_jaccard_csv(&names, &avg, b))?)?;
    }

    // bias slices of the chosen positive-outcome model at the matched k
    let mut quadrants: Vec<(u32, QuadrantReport)> = Vec::new();
    let mut scatter = Vec::new();
    if let Some(po) = best.get(&Target::PositiveOutcome) {
        let po_scores = &scores[&(Target::PositiveOutcome, po.clone())];
        for (j, plan) in manifest.plans.iter().enumerate() {
            let Some(b) = month_baseline(&baselines, plan).filter(|b| b.referral_count > 0) else { continue };
            let rows = &po_scores.folds[j];
            let scored: Vec<ScoredAlert> = rows.iter().map(|r| r.scored(Target::PositiveOutcome)).collect();
            let bias =
                bias_slices(&scored, &demographics(&alerts, rows), b.referral_count).map_err(PipelineError::runtime)?;
            write_file(
                &reports.join("bias").join(format!("fold-{:02}.csv", plan.fold_id)),
                &csv_bytes(|w| write_bias_csv(&bias, w))?,
            )?;

            if let Some(rf) = best.get(&Target::Referral) {
                let ref_rows = &scores[&(Target::Referral, rf.clone())].folds[j];
                let qa: Vec<QuadrantAlert> = rows
                    .iter()
                    .zip(ref_rows)
                    .map(|(p, r)| {
                        let a = alerts[p.alert_id.as_str()];
                        QuadrantAlert {
                            id: p.alert_id.clone(),
                            created_at: p.created_at,
                            po_score: p.score,
                            referral_score: r.score,
                            referred: p.referral,
                            positive: p.positive,
                            gender: a.gender,
                            age_band: a.age_band,
                            word_count: alert_words(a),
                        }
                    })
                    .collect();
                let n_ref = b.referral_count.min(qa.len());
                let n_found = b.found_count.min(qa.len());
                let q = quadrant_report(&qa, n_ref, n_found).map_err(PipelineError::runtime)?;
                if j + 1 == manifest.plans.len() {
                    let by_id: HashMap<&str, &QuadrantAlert> = qa.iter().map(|a| (a.id.as_str(), a)).collect();
                    scatter = q
                        .assignments
                        .iter()
                        .map(|(id, quad)| ScatterPoint {
                            id: id.clone(),
                            po_score: by_id[id.as_str()].po_score,
                            referral_score: by_id[id.as_str()].referral_score,
                            quadrant: *quad,
                        })
                        .collect();
                }
                quadrants.push((plan.fold_id, q));
            }
        }
    }
    if !quadrants.is_empty() {
        write_file(&reports.join("quadrants.csv"), &csv_bytes(|b| write_quadrants_csv(&quadrants, b))?)?;
    }
    let last_q = quadrants.last();
    let plot = PlotData {
        scatter_fold: last_q.map(|(f, _)| *f),
        horizontal_threshold: last_q.and_then(|(_, q)| q.horizontal_threshold),
        vertical_threshold: last_q.and_then(|(_, q)| q.vertical_threshold),
        scatter,
        curves,
        group_importances: plot_groups,
    };
    write_json(&reports.join("plot_data.json"), &plot)?;

    // service hand-off: latest fold's models and a precision-calibrated threshold
    let last = *fold_ids.last().expect("folds");
    let po = best.get(&Target::PositiveOutcome).cloned().ok_or_else(|| {
        PipelineError::Validation("the positive_outcome target is required to choose a serving model".into())
    })?;
    let last_scored: Vec<ScoredAlert> = scores[&(Target::PositiveOutcome, po.clone())]
        .folds
        .last()
        .expect("folds")
        .iter()
        .map(|r| r.scored(Target::PositiveOutcome))
        .collect();
    let thr = auto_referral_threshold(
        &last_scored,
        cfg.evaluation.auto_referral_precision,
        cfg.evaluation.auto_referral_min_support,
    );
    let choice = ServingChoice {
        fold_id: last,
        featurizer: last_art.file.clone(),
        po_model: model_artifact_id(&po, last),
        referral_model: best.get(&Target::Referral).map(|m| model_artifact_id(m, last)),
        auto_referral_threshold: thr.map(|t| t.0),
        threshold_precision: thr.map(|t| t.1),
        threshold_k: thr.map(|t| t.2),
    };
    write_json(&reports.join("serving.json"), &choice)?;

    let summary = EvaluationSummary {
        config_hash: cfg.config_hash(),
        corpus_hash: manifest.corpus_hash.clone(),
        folds: fold_ids.len(),
        columns: manifest.columns,
        disabled_groups: FeatureGroup::ALL.into_iter().filter(|g| !cfg.features.groups.contains(g)).collect(),
        leakage_offenders: manifest.folds.iter().map(|f| f.leakage_offenders).sum(),
        best: selections,
        uplift: uplifts.get(&po).cloned(),
        null_check,
        serving: choice,
    };
    write_json(&reports.join(EVALUATION_FILE), &summary)?;
    Ok(summary)
}
