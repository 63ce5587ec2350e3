//! Per-query results file: one line per query, sorted by query id.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ResponseTrack, ScoredTrack};
use crate::pipeline::{Answer, Peak};

pub const FORMAT: &str = "vq2d.predictions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Answered {
        confidence: f64,
        peak: Peak,
        track: ResponseTrack,
    },
    NoResponse,
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub video_id: String,
    #[serde(flatten)]
    pub outcome: Outcome,
}

impl QueryRecord {
    pub fn answered(query_id: impl Into<String>, answer: Answer) -> Self {
        QueryRecord {
            query_id: query_id.into(),
            video_id: answer.prediction.track.video_id().to_owned(),
            outcome: Outcome::Answered {
                confidence: answer.prediction.confidence,
                peak: answer.peak,
                track: answer.prediction.track,
            },
        }
    }

    pub fn prediction(&self) -> Result<Option<ScoredTrack>> {
        match &self.outcome {
            Outcome::Answered { confidence, track, .. } => {
                if track.video_id() != self.video_id {
                    return Err(Error::VideoMismatch {
                        left: track.video_id().to_owned(),
                        right: self.video_id.clone(),
                    });
                }
                ScoredTrack::new(track.clone(), *confidence).map(Some)
            }
            Outcome::NoResponse | Outcome::Error { .. } => Ok(None),
        }
    }

    pub fn peak(&self) -> Option<&Peak> {
        match &self.outcome {
            Outcome::Answered { peak, .. } => Some(peak),
            _ => None,
        }
    }
}

pub fn save_predictions(path: &Path, records: &[QueryRecord]) -> Result<()> {
    super::write_records(path, FORMAT, records)
}

pub fn encode_predictions(records: &[QueryRecord]) -> Result<String> {
    super::encode_records(FORMAT, records)
}

/// Loads a results file; query ids must be unique.
pub fn load_predictions(path: &Path) -> Result<Vec<QueryRecord>> {
    let records: Vec<QueryRecord> = super::read_records(path, FORMAT)?;
    let mut seen = std::collections::HashSet::new();
    for r in &records {
        if !seen.insert(r.query_id.as_str()) {
            return Err(Error::DuplicateQuery(r.query_id.clone()));
        }
        r.prediction()?;
    }
    Ok(records)
}
