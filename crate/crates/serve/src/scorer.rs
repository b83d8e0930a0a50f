use std::collections::HashSet;
use std::sync::{Arc, RwLock};

use streetrank_core::domain::Alert;
use streetrank_core::featurize::FeatureContext;
use streetrank_core::pipeline::{ExperimentConfig, LiveScores, PipelineError, ServingBundle};
use streetrank_core::store::StoreState;

/// What the service needs to know about the active models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelInfo {
    pub po_model: Option<String>,
    pub referral_model: Option<String>,
    /// Calibrated auto-referral cut; `None` means auto-referral is off.
    pub auto_referral_threshold: Option<f64>,
    /// Referral-score and positive-outcome-score cuts for quadrant tags.
    pub horizontal_threshold: Option<f64>,
    pub vertical_threshold: Option<f64>,
}

pub trait Scorer: Send + Sync {
    fn score(&self, alert: &Alert) -> Result<LiveScores, String>;

    /// Rebuilds cached history so it includes what has been ingested so far.
    fn refresh(&self, _state: &StoreState) -> Result<(), String> {
        Ok(())
    }

    fn info(&self) -> ModelInfo;
}

/// Scores with the models `evaluate` picked, against a cached history snapshot.
pub struct ModelScorer {
    cfg: ExperimentConfig,
    bundle: ServingBundle,
    corpus_ids: HashSet<String>,
    ctx: RwLock<Arc<FeatureContext>>,
}

impl ModelScorer {
    pub fn new(cfg: &ExperimentConfig, bundle: ServingBundle) -> Result<Self, PipelineError> {
        let ctx = bundle.context(cfg, &[], &[])?;
        let corpus_ids = bundle.corpus.alerts.iter().map(|a| a.id.clone()).collect();
        Ok(Self { cfg: cfg.clone(), bundle, corpus_ids, ctx: RwLock::new(Arc::new(ctx)) })
    }

    pub fn load(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        Self::new(cfg, streetrank_core::pipeline::load_serving(cfg)?)
    }
}

impl Scorer for ModelScorer {
    fn score(&self, alert: &Alert) -> Result<LiveScores, String> {
        let ctx = self.ctx.read().expect("context lock").clone();
        self.bundle.score(&ctx, alert).map_err(|e| e.to_string())
    }

    fn refresh(&self, state: &StoreState) -> Result<(), String> {
        let live: Vec<&streetrank_core::store::AlertState> =
            state.iter().filter(|s| !self.corpus_ids.contains(&s.alert.id)).collect();
        let alerts: Vec<Alert> = live.iter().map(|s| s.alert.clone()).collect();
        let outcomes: Vec<_> = live.iter().filter_map(|s| s.outcome.clone()).collect();
        let ctx = self.bundle.context(&self.cfg, &alerts, &outcomes).map_err(|e| e.to_string())?;
        *self.ctx.write().expect("context lock") = Arc::new(ctx);
        Ok(())
    }

    fn info(&self) -> ModelInfo {
        let c = &self.bundle.choice;
        ModelInfo {
            po_model: Some(c.po_model.clone()),
            referral_model: c.referral_model.clone(),
            auto_referral_threshold: c.auto_referral_threshold,
            horizontal_threshold: self.bundle.horizontal_threshold,
            vertical_threshold: self.bundle.vertical_threshold,
        }
    }
}
