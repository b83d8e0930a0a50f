//! Per-fold test scores, one CSV per (target, model, fold).

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{PipelineError, Target};
use crate::domain::Positive;
use crate::evaluate::ScoredAlert;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub alert_id: String,
    pub created_at: DateTime<Utc>,
    pub score: f64,
    pub referral: bool,
    pub positive: Positive,
}

impl ScoreRow {
    /// The row as a ranked alert labelled for `target`.
    pub fn scored(&self, target: Target) -> ScoredAlert {
        let label = match target {
            Target::PositiveOutcome => self.positive,
            Target::Referral => {
                if self.referral {
                    Positive::Yes
                } else {
                    Positive::No
                }
            }
        };
        ScoredAlert { id: self.alert_id.clone(), created_at: self.created_at, score: self.score, label }
    }
}

pub fn write_scores(path: &Path, rows: &[ScoreRow]) -> Result<(), PipelineError> {
    let bytes = super::csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    super::write_file(path, &bytes)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRow>, PipelineError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| PipelineError::Validation(format!("{} is missing ({e}); run `train` first", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<ScoreRow>, _>>()
        .map_err(|e| PipelineError::Runtime(format!("{}: {e}", path.display())))
}
