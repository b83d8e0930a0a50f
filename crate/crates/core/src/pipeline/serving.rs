//! Loading the evaluated models for live scoring.

use super::evaluate::ServingChoice;
use super::features::{load_featurizer, read_manifest};
use super::{load_corpus, read_json, ExperimentConfig, Layout, PipelineError, Target};
use crate::domain::io::Corpus;
use crate::domain::Alert;
use crate::evaluate::report::PlotData;
use crate::featurize::{FeatureContext, FittedFeaturizer};
use crate::learners::TrainedEnsemble;
use crate::matrix::FeatureGroup;
use crate::store::ModelRegistry;

/// Models, featurizer and corpus chosen by `evaluate` for the service.
pub struct ServingBundle {
    pub choice: ServingChoice,
    pub featurizer: FittedFeaturizer,
    pub po_model: TrainedEnsemble,
    pub referral_model: Option<TrainedEnsemble>,
    /// Referral-score cut of the latest fold's quadrant split.
    pub horizontal_threshold: Option<f64>,
    /// Positive-outcome-score cut of the same split.
    pub vertical_threshold: Option<f64>,
    /// History the live features are computed against.
    pub corpus: Corpus,
}

/// Scores of one alert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiveScores {
    pub po_score: f64,
    pub ref_score: f64,
    pub duplicate: bool,
}

pub fn load_serving(cfg: &ExperimentConfig) -> Result<ServingBundle, PipelineError> {
    let layout = Layout::new(&cfg.out_dir);
    let reports = layout.reports();
    let choice: ServingChoice = read_json(&reports.join("serving.json"), "evaluate")?;
    let plot: PlotData = read_json(&reports.join("plot_data.json"), "evaluate")?;
    let manifest = read_manifest(&layout)?;
    let art =
        manifest.folds.iter().find(|f| f.file == choice.featurizer).ok_or_else(|| {
            PipelineError::Validation(format!("{} is not in the feature manifest", choice.featurizer))
        })?;
    let featurizer = load_featurizer(&layout, art)?;
    let schema = featurizer.schema();
    let po_model =
        ModelRegistry::new(layout.models(Target::PositiveOutcome)).get_model_for(&choice.po_model, schema)?;
    let referral_model = match &choice.referral_model {
        Some(id) => Some(ModelRegistry::new(layout.models(Target::Referral)).get_model_for(id, schema)?),
        None => None,
    };
    let corpus = load_corpus(cfg)?.corpus;
    Ok(ServingBundle {
        choice,
        featurizer,
        po_model,
        referral_model,
        horizontal_threshold: plot.horizontal_threshold,
        vertical_threshold: plot.vertical_threshold,
        corpus,
    })
}

impl ServingBundle {
    /// Feature context over the bundled corpus plus `extra` alerts and outcomes.
    pub fn context(
        &self,
        cfg: &ExperimentConfig,
        extra_alerts: &[Alert],
        extra_outcomes: &[crate::domain::OutcomeRecord],
    ) -> Result<FeatureContext, PipelineError> {
        let mut c = self.corpus.clone();
        c.alerts.extend_from_slice(extra_alerts);
        c.outcomes.extend_from_slice(extra_outcomes);
        FeatureContext::new(&c, cfg.features.clone()).map_err(PipelineError::runtime)
    }

    pub fn score(&self, ctx: &FeatureContext, alert: &Alert) -> Result<LiveScores, PipelineError> {
        let base = ctx.compute(std::slice::from_ref(alert)).map_err(PipelineError::runtime)?;
        let dup_col = base.columns().iter().position(|c| c.group == FeatureGroup::Duplicate);
        let duplicate = dup_col.is_some_and(|j| base.row(0).values[j] > 0.5);
        let m = self.featurizer.transform(&base, &[0]).map_err(PipelineError::runtime)?;
        let po_score = self.po_model.predict_scores(&m).map_err(PipelineError::runtime)?[0];
        let ref_score = match &self.referral_model {
            Some(r) => r.predict_scores(&m).map_err(PipelineError::runtime)?[0],
            None => 0.0,
        };
        Ok(LiveScores { po_score, ref_score, duplicate })
    }
}
