//! Detect, localize the peak, track: the response-track pipeline.
//!
//! [`run_query`] scores every frame before the query frame against the
//! visual crop, takes the most confident frame as the seed, and grows a
//! track from it in both directions with a template-matching tracker.

pub mod curve;
pub mod frames;
pub mod ncc;
pub mod scorer;
pub mod tracker;

use serde::{Deserialize, Serialize};

pub use curve::{detect_peak, score_frames, CurvePoint, Peak, SimilarityCurve};
pub use frames::{crop_image, DirFrameStore, FrameSource, MemoryFrameStore};
pub use ncc::{ncc_score, NccMatch, NccParams};
pub use scorer::{CropScorer, Detection, DetectionsScorer, FrameScorer, NccScorer};
pub use tracker::{track_bidirectional, SearchMargin, TemplateUpdate, TrackerConfig};

use crate::error::{Error, Result};
use crate::geometry::{ScoredTrack, VisualQuery};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueryConfig {
    pub tracker: TrackerConfig,
    /// Peaks scoring below this yield no response. `None` answers every
    /// query that has at least one proposal.
    pub min_peak_score: Option<f64>,
}

/// A produced response and the peak it was grown from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub prediction: ScoredTrack,
    pub peak: Peak,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryOutcome {
    Answered(Answer),
    /// The scorer found nothing worth answering with.
    NoResponse,
}

/// Similarity curve of a query over `[0, q - 1]`.
pub fn query_curve(store: &dyn FrameSource, query: &VisualQuery, scorer: &dyn FrameScorer) -> Result<SimilarityCurve> {
    let crop_src = store.frame(&query.crop_video_id, query.crop_frame)?;
    let crop = crop_image(&crop_src, &query.crop_box)?;
    let num_frames = store.num_frames(&query.video_id)?;
    if query.query_frame.0 > num_frames {
        return Err(Error::InvalidQuery(format!(
            "{}: query frame {} is past the end of video {:?} ({num_frames} frames)",
            query.query_id, query.query_frame, query.video_id
        )));
    }
    score_frames(store, &query.video_id, &crop, query.search_span(), scorer)
}

/// Runs the full pipeline for one query.
pub fn run_query(
    store: &dyn FrameSource,
    query: &VisualQuery,
    scorer: &dyn FrameScorer,
    cfg: &QueryConfig,
) -> Result<QueryOutcome> {
    let curve = query_curve(store, query, scorer)?;
    let peak = match detect_peak(&curve) {
        Ok(p) => p,
        Err(Error::NoProposal) => return Ok(QueryOutcome::NoResponse),
        Err(e) => return Err(e),
    };
    if cfg.min_peak_score.is_some_and(|m| peak.score < m) {
        return Ok(QueryOutcome::NoResponse);
    }
    let peak_img = store.frame(&query.video_id, peak.frame)?;
    let template = crop_image(&peak_img, &peak.bbox)?;
    let track = track_bidirectional(
        store,
        &query.video_id,
        &peak,
        &template,
        query.search_span(),
        &cfg.tracker,
    )?;
    Ok(QueryOutcome::Answered(Answer {
        prediction: ScoredTrack::new(track, peak.score)?,
        peak,
    }))
}
