use super::{ExperimentConfig, Layout, PipelineError};
use crate::synthgen::{generate_corpus, Manifest};

/// Generates the synthetic corpus into `<out>/corpus`.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    if let Some(dir) = &cfg.corpus.dir {
        return Err(PipelineError::Validation(format!(
            "the corpus is read from {}; remove corpus.dir to generate one",
            dir.display()
        )));
    }
    let corpus = generate_corpus(&cfg.generator()).map_err(PipelineError::runtime)?;
    let dir = Layout::new(&cfg.out_dir).corpus();
    let manifest = corpus.write_dir(&dir).map_err(PipelineError::runtime)?;
    tracing::info!(alerts = manifest.alerts, dir = %dir.display(), "corpus written");
    Ok(manifest)
}
