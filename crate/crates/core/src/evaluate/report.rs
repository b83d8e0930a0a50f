//! CSV tables and the JSON plot-data file.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{BiasRow, MetricsTable, Quadrant, QuadrantReport, UpliftRow, UpliftSummary};
use crate::matrix::FeatureGroup;

pub type ReportResult = Result<(), csv::Error>;

/// Fixed six-decimal rendering; absent values are empty cells.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_metrics_csv<W: Write>(table: &MetricsTable, w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["scope", "k", "k_used", "precision", "recall", "found_rate", "null_count"])?;
    for f in &table.folds {
        for r in &f.rows {
            wtr.write_record([
                format!("fold-{}", f.fold_id),
                r.k.to_string(),
                r.k_used.to_string(),
                fmt_opt(r.precision),
                fmt_opt(r.recall),
                fmt_opt(r.found_rate),
                r.null_count.to_string(),
            ])?;
        }
    }
    for r in &table.averaged {
        wtr.write_record([
            "average".to_string(),
            r.k.to_string(),
            String::new(),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            fmt_opt(r.found_rate),
            format!("{:.2}", r.null_count),
        ])?;
    }
    for r in &table.pooled {
        wtr.write_record([
            "pooled".to_string(),
            r.k.to_string(),
            String::new(),
            fmt_opt(r.precision),
            fmt_opt(r.recall),
            fmt_opt(r.found_rate),
            r.null_count.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_uplift_csv<W: Write>(rows: &[UpliftRow], summary: &UpliftSummary, w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fold", "month", "k", "clamped", "model_found_rate", "baseline_found_rate", "uplift"])?;
    for r in rows {
        wtr.write_record([
            r.fold_id.to_string(),
            r.month.format("%Y-%m").to_string(),
            r.k.to_string(),
            r.clamped.to_string(),
            fmt_opt(r.model_found_rate),
            fmt_opt(r.baseline_found_rate),
            fmt_opt(r.uplift),
        ])?;
    }
    wtr.write_record([
        "average".to_string(),
        String::new(),
        String::new(),
        String::new(),
        fmt_opt(summary.mean_model_found_rate),
        fmt_opt(summary.mean_baseline_found_rate),
        fmt_opt(summary.uplift_of_means),
    ])?;
    wtr.flush()?;
    Ok(())
}

/// One block of four rows per fold.
pub fn write_quadrants_csv<W: Write>(reports: &[(u32, QuadrantReport)], w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "fold",
        "quadrant",
        "count",
        "referred",
        "positive_yes",
        "positive_no",
        "positive_null",
        "female_share",
        "mean_word_count",
        "horizontal_threshold",
        "vertical_threshold",
    ])?;
    for (fold_id, report) in reports {
        for q in Quadrant::ALL {
            let s = &report.quadrants[&q];
            wtr.write_record([
                fold_id.to_string(),
                format!("{q:?}"),
                s.count.to_string(),
                s.referred.to_string(),
                s.positive_yes.to_string(),
                s.positive_no.to_string(),
                s.positive_null.to_string(),
                fmt_opt(s.female_share),
                fmt_opt(s.mean_word_count),
                fmt_opt(report.horizontal_threshold),
                fmt_opt(report.vertical_threshold),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_jaccard_csv<W: Write>(names: &[String], matrix: &[Vec<f64>], w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["model".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header)?;
    for (name, row) in names.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| format!("{v:.6}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Suppressed groups carry a `<5` marker instead of numbers.
pub fn write_bias_csv<W: Write>(rows: &[BiasRow], w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["attribute", "group", "pool_count", "selection_rate", "found_rate", "representation_ratio"])?;
    for r in rows {
        let count = if r.suppressed { "<5".to_string() } else { r.pool_count.map_or(String::new(), |c| c.to_string()) };
        wtr.write_record([
            r.attribute.clone(),
            r.group.clone(),
            count,
            fmt_opt(r.selection_rate),
            fmt_opt(r.found_rate),
            fmt_opt(r.representation_ratio),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_importances_csv<W: Write>(groups: &BTreeMap<FeatureGroup, f64>, w: W) -> ReportResult {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["group", "importance", "log10_importance"])?;
    for g in ranked_groups(groups) {
        wtr.write_record([g.group.to_string(), format!("{:.6}", g.importance), fmt_opt(g.log10_importance)])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupImportance {
    pub group: FeatureGroup,
    pub importance: f64,
    /// Display-only log scaling; absent for zero importance.
    pub log10_importance: Option<f64>,
}

/// Groups by descending importance, ties by group order.
pub fn ranked_groups(groups: &BTreeMap<FeatureGroup, f64>) -> Vec<GroupImportance> {
    let mut v: Vec<GroupImportance> = groups
        .iter()
        .map(|(&group, &importance)| GroupImportance {
            group,
            importance,
            log10_importance: (importance > 0.0).then(|| importance.log10()),
        })
        .collect();
    v.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.group.cmp(&b.group)));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub po_score: f64,
    pub referral_score: f64,
    pub quadrant: Quadrant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub found_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub model: String,
    pub target: String,
    pub points: Vec<CurvePoint>,
}

/// Everything needed to draw the score scatter, the at-k curves and the
/// grouped importances.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub scatter_fold: Option<u32>,
    pub horizontal_threshold: Option<f64>,
    pub vertical_threshold: Option<f64>,
    pub scatter: Vec<ScatterPoint>,
    pub curves: Vec<Curve>,
    pub group_importances: Vec<GroupImportance>,
}

impl PlotData {
    pub fn curve_from(model: &str, target: &str, table: &MetricsTable) -> Curve {
        Curve {
            model: model.to_string(),
            target: target.to_string(),
            points: table
                .averaged
                .iter()
                .map(|r| CurvePoint { k: r.k, precision: r.precision, recall: r.recall, found_rate: r.found_rate })
                .collect(),
        }
    }
}
