use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    featurizer_file, load_corpus, read_json, write_file, write_json, ExperimentConfig, Layout, LoadedCorpus,
    PipelineError,
};
use crate::domain::OutcomeRecord;
use crate::featurize::{BaseFeatures, FeatureContext, FittedFeaturizer, ImputationPriors};
use crate::matrix::FeatureMatrix;
use crate::tempcv::{
    index_outcomes, label_rows, leakage_check, make_folds, write_folds_csv, FoldCounts, FoldPlan, FoldRows,
    LeakageReport, RowProvenance, Split,
};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldArtifact {
    pub fold_id: u32,
    pub file: String,
    pub sha256: String,
    pub train_rows: usize,
    pub test_rows: usize,
    pub leakage_offenders: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub features_hash: String,
    pub corpus_hash: String,
    pub alerts: usize,
    pub rejected_alerts: usize,
    /// Hash of every base feature value, so later stages can check their recomputation.
    pub base_hash: String,
    pub columns: usize,
    pub schema_fingerprint: String,
    pub folds: Vec<FoldArtifact>,
    pub plans: Vec<FoldPlan>,
}

fn base_hash(base: &BaseFeatures) -> String {
    let mut h = Sha256::new();
    for i in 0..base.n_rows() {
        h.update(base.alert_ids()[i].as_bytes());
        let r = base.row(i);
        for v in &r.values {
            h.update(v.to_bits().to_le_bytes());
        }
        for d in [&r.location_doc, &r.activity_doc] {
            h.update((d.len() as u64).to_le_bytes());
            for w in d {
                h.update(w.as_bytes());
                h.update([0]);
            }
        }
    }
    hex::encode(h.finalize())
}

/// Corpus, base features and fold labelling shared by the feature and training stages.
pub(crate) struct Prepared {
    pub loaded: LoadedCorpus,
    pub base: BaseFeatures,
    pub base_hash: String,
    pub plans: Vec<FoldPlan>,
    pub rows: Vec<FoldRows>,
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let loaded = load_corpus(cfg)?;
        let plans = make_folds(&cfg.cv).map_err(|e| PipelineError::Validation(e.to_string()))?;
        let c = &loaded.corpus;
        let ctx = FeatureContext::new(c, cfg.features.clone()).map_err(PipelineError::runtime)?;
        let base = ctx.compute(&c.alerts).map_err(PipelineError::runtime)?;
        let by_alert: Vec<Option<&OutcomeRecord>> =
            index_outcomes(&c.alerts, &c.outcomes).map_err(PipelineError::runtime)?;
        let rows = plans.iter().map(|p| label_rows(&c.alerts, &by_alert, p)).collect();
        let base_hash = base_hash(&base);
        Ok(Self { loaded, base, base_hash, plans, rows })
    }

    /// Rows with a resolved outcome in the training window (the referral training set).
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        self.rows[fold].train_referral.iter().map(|&(i, _)| i).collect()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        self.rows[fold].test.iter().map(|t| t.index).collect()
    }

    pub fn fit_featurizer(&self, cfg: &ExperimentConfig, fold: usize) -> Result<FittedFeaturizer, PipelineError> {
        let train = self.train_rows(fold);
        let c = &self.loaded.corpus;
        let priors = ImputationPriors::from_training(&c.alerts, &c.outcomes, &train, self.plans[fold].train_end);
        FittedFeaturizer::fit(&cfg.features, &self.base, &train, priors).map_err(PipelineError::runtime)
    }

    pub fn matrix(&self, f: &FittedFeaturizer, rows: &[usize]) -> Result<FeatureMatrix, PipelineError> {
        f.transform(&self.base, rows).map_err(PipelineError::runtime)
    }

    pub fn leakage(&self, fold: usize) -> LeakageReport {
        let prov = |i: usize, split: Split| RowProvenance {
            alert_id: self.base.alert_ids()[i].clone(),
            split,
            created_at: self.base.created_at(i),
            max_info_ts: self.base.provenance(i),
        };
        let mut rows: Vec<RowProvenance> = self.train_rows(fold).into_iter().map(|i| prov(i, Split::Train)).collect();
        rows.extend(self.test_rows(fold).into_iter().map(|i| prov(i, Split::Test)));
        leakage_check(&self.plans[fold], &rows)
    }
}

pub(crate) fn read_manifest(layout: &Layout) -> Result<FeatureManifest, PipelineError> {
    read_json(&layout.features().join(MANIFEST), "featurize")
}

/// Computes base features, fits one featurizer per fold and audits every fold for leakage.
pub fn cmd_featurize(cfg: &ExperimentConfig) -> Result<FeatureManifest, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.out_dir);
    let dir = layout.features();
    let prep = super::with_pool(cfg.workers, || Prepared::new(cfg))??;

    let mut folds = Vec::new();
    let mut leak_rows = Vec::new();
    let mut schema = None;
    for (j, plan) in prep.plans.iter().enumerate() {
        let f = super::with_pool(cfg.workers, || prep.fit_featurizer(cfg, j))??;
        let bytes = f.to_bytes().map_err(PipelineError::runtime)?;
        let file = featurizer_file(plan.fold_id);
        write_file(&dir.join(&file), &bytes)?;
        let report = prep.leakage(j);
        folds.push(FoldArtifact {
            fold_id: plan.fold_id,
            file,
            sha256: crate::artifact::sha256_hex(&bytes),
            train_rows: prep.rows[j].train_referral.len(),
            test_rows: prep.rows[j].test.len(),
            leakage_offenders: report.offenders.len(),
        });
        leak_rows.push(report);
        schema.get_or_insert_with(|| f.schema().clone());
    }
    let schema = schema.ok_or_else(|| PipelineError::Validation("no folds".into()))?;

    let counts: Vec<FoldCounts> = prep.rows.iter().map(FoldCounts::from).collect();
    write_file(&dir.join("folds.csv"), &super::csv_bytes(|b| write_folds_csv(&prep.plans, Some(&counts), b))?)?;
    write_file(&dir.join("schema.csv"), &super::csv_bytes(|b| schema.write_csv(b).map_err(matrix_csv))?)?;
    let leak = super::csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["fold", "rows_checked", "offenders", "passed", "first_offender"])?;
        for r in &leak_rows {
            w.write_record([
                r.fold_id.to_string(),
                r.rows_checked.to_string(),
                r.offenders.len().to_string(),
                r.passed().to_string(),
                r.offenders.first().cloned().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_file(&dir.join("leakage.csv"), &leak)?;

    let manifest = FeatureManifest {
        features_hash: cfg.features_hash(),
        corpus_hash: prep.loaded.hash.clone(),
        alerts: prep.loaded.corpus.alerts.len(),
        rejected_alerts: prep.loaded.rejected,
        base_hash: prep.base_hash.clone(),
        columns: schema.len(),
        schema_fingerprint: schema.fingerprint(),
        folds,
        plans: prep.plans.clone(),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    if let Some(bad) = leak_rows.iter().find(|r| !r.passed()) {
        return Err(PipelineError::Runtime(format!(
            "leakage check failed on fold {} ({} rows use information from after their cut-off)",
            bad.fold_id,
            bad.offenders.len()
        )));
    }
    tracing::info!(folds = manifest.folds.len(), columns = manifest.columns, "features ready");
    Ok(manifest)
}

fn matrix_csv(e: crate::matrix::MatrixError) -> csv::Error {
    match e {
        crate::matrix::MatrixError::Csv(c) => c,
        other => csv::Error::from(std::io::Error::other(other.to_string())),
    }
}

/// Recomputes the base features and checks them against the feature manifest.
pub(crate) fn prepare_checked(cfg: &ExperimentConfig) -> Result<(Prepared, FeatureManifest), PipelineError> {
    let layout = Layout::new(&cfg.out_dir);
    let manifest = read_manifest(&layout)?;
    if manifest.features_hash != cfg.features_hash() {
        return Err(PipelineError::Validation(
            "features were built with different feature or CV settings; rerun `featurize`".into(),
        ));
    }
    let prep = super::with_pool(cfg.workers, || Prepared::new(cfg))??;
    if prep.loaded.hash != manifest.corpus_hash {
        return Err(PipelineError::Validation("the corpus changed since `featurize`; rerun it".into()));
    }
    if prep.base_hash != manifest.base_hash {
        return Err(PipelineError::Runtime("recomputed base features differ from the feature manifest".into()));
    }
    Ok((prep, manifest))
}

/// Loads and verifies one fold's featurizer.
pub(crate) fn load_featurizer(layout: &Layout, art: &FoldArtifact) -> Result<FittedFeaturizer, PipelineError> {
    let path = layout.features().join(&art.file);
    let bytes = std::fs::read(&path)
        .map_err(|e| PipelineError::Validation(format!("{} is missing ({e}); rerun `featurize`", path.display())))?;
    if crate::artifact::sha256_hex(&bytes) != art.sha256 {
        return Err(PipelineError::Runtime(format!("{} does not match the feature manifest", path.display())));
    }
    FittedFeaturizer::from_bytes(&bytes).map_err(PipelineError::runtime)
}
