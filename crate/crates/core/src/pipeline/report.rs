use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::evaluate::{EvaluationSummary, EVALUATION_FILE};
use super::{csv_bytes, read_json, write_file, ExperimentConfig, Layout, PipelineError, Target};
use crate::evaluate::report::fmt_opt;

/// The chosen model for one target and the matched-k metrics it was chosen on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSelection {
    pub target: Target,
    pub model: String,
    pub matched_found_rate: Option<f64>,
    pub matched_recall: Option<f64>,
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}%", 100.0 * v))
}

fn render_text(s: &EvaluationSummary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "config {}", &s.config_hash[..16]);
    let _ = writeln!(t, "corpus {}", &s.corpus_hash[..16]);
    let _ = writeln!(t, "{} folds, {} feature columns", s.folds, s.columns);
    if s.disabled_groups.is_empty() {
        let _ = writeln!(t, "all feature groups enabled");
    } else {
        let names: Vec<String> = s.disabled_groups.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(t, "ablation: feature groups excluded: {}", names.join(", "));
    }
    let _ = writeln!(t, "leakage offenders: {}", s.leakage_offenders);
    let _ = writeln!(t);
    let _ = writeln!(t, "best model by found rate at the baseline-matched k (recall breaks ties):");
    for b in &s.best {
        let _ = writeln!(
            t,
            "  {:<17} {:<16} found rate {:>6}  recall {:>6}",
            b.target.as_str(),
            b.model,
            pct(b.matched_found_rate),
            pct(b.matched_recall)
        );
    }
    if let Some(u) = &s.uplift {
        let _ = writeln!(t);
        let _ = writeln!(
            t,
            "manual baseline found rate {}, model {}, uplift {}",
            pct(u.mean_baseline_found_rate),
            pct(u.mean_model_found_rate),
            u.uplift_of_means.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}x"))
        );
    }
    if let Some(n) = &s.null_check {
        let _ = writeln!(t);
        let _ = writeln!(
            t,
            "permuted-label check ({}): {}",
            n.model,
            if n.passed() { "every group below twice its floor" } else { "FAILED" }
        );
        for g in n.groups.iter().filter(|g| g.importance >= 2.0 * g.floor) {
            let _ = writeln!(t, "  {} at {:.3} vs floor {:.3}", g.group, g.importance, g.floor);
        }
    }
    let _ = writeln!(t);
    let sv = &s.serving;
    let _ = writeln!(t, "serving fold {} with {}", sv.fold_id, sv.po_model);
    match (sv.auto_referral_threshold, sv.threshold_precision) {
        (Some(th), Some(p)) => {
            let _ = writeln!(t, "auto-referral at score >= {th:.4} (precision {})", pct(Some(p)));
        }
        _ => {
            let _ = writeln!(t, "auto-referral disabled: no cut-off reached the target precision");
        }
    }
    t
}

/// Renders `reports/summary.txt` and `reports/summary.csv` from the evaluation output.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<EvaluationSummary, PipelineError> {
    cfg.validate()?;
    let reports = Layout::new(&cfg.out_dir).reports();
    let s: EvaluationSummary = read_json(&reports.join(EVALUATION_FILE), "evaluate")?;
    if s.config_hash != cfg.config_hash() {
        return Err(PipelineError::Validation(
            "the evaluation was run with a different config; rerun `evaluate`".into(),
        ));
    }
    write_file(&reports.join("summary.txt"), render_text(&s).as_bytes())?;
    let bytes = csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["key", "value"])?;
        let mut row = |k: &str, v: String| w.write_record([k, v.as_str()]);
        row("config_hash", s.config_hash.clone())?;
        row("corpus_hash", s.corpus_hash.clone())?;
        row("folds", s.folds.to_string())?;
        row("columns", s.columns.to_string())?;
        row("disabled_groups", s.disabled_groups.iter().map(|g| g.to_string()).collect::<Vec<_>>().join(";"))?;
        row("leakage_offenders", s.leakage_offenders.to_string())?;
        for b in &s.best {
            let t = b.target.as_str();
            row(&format!("best_model.{t}"), b.model.clone())?;
            row(&format!("matched_found_rate.{t}"), fmt_opt(b.matched_found_rate))?;
            row(&format!("matched_recall.{t}"), fmt_opt(b.matched_recall))?;
        }
        if let Some(u) = &s.uplift {
            row("baseline_found_rate", fmt_opt(u.mean_baseline_found_rate))?;
            row("model_found_rate", fmt_opt(u.mean_model_found_rate))?;
            row("uplift", fmt_opt(u.uplift_of_means))?;
        }
        if let Some(n) = &s.null_check {
            row("null_check_passed", n.passed().to_string())?;
        }
        row("auto_referral_threshold", fmt_opt(s.serving.auto_referral_threshold))?;
        w.flush()?;
        Ok(())
    })?;
    write_file(&reports.join("summary.csv"), &bytes)?;
    Ok(s)
}
