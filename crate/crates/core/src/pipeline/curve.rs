//! Similarity curve over a frame range and peak detection on it.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameIndex, FrameSpan};
use crate::pipeline::frames::FrameSource;
use crate::pipeline::scorer::{CropScorer, FrameScorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Top-1 score; 0 when the scorer had no proposal.
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: Option<BBox>,
}

/// Per-frame top-1 score and box, one point per consecutive frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityCurve {
    first_frame: FrameIndex,
    points: Vec<CurvePoint>,
}

impl SimilarityCurve {
    pub fn new(first_frame: FrameIndex, points: Vec<CurvePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "a similarity curve needs at least one point".into(),
            ));
        }
        if let Some(p) = points.iter().find(|p| !p.score.is_finite()) {
            return Err(Error::InvalidInput(format!("curve score {} is not finite", p.score)));
        }
        Ok(SimilarityCurve { first_frame, points })
    }

    pub fn first_frame(&self) -> FrameIndex {
        self.first_frame
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> impl Iterator<Item = (FrameIndex, &CurvePoint)> {
        self.points
            .iter()
            .enumerate()
            .map(move |(i, p)| (self.first_frame.offset(i as u32), p))
    }
}

/// The most confident frame of a curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub frame: FrameIndex,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Scores every frame of `range` with a scorer already prepared for the crop.
pub fn score_frames_prepared(
    store: &dyn FrameSource,
    video_id: &str,
    range: FrameSpan,
    scorer: &dyn CropScorer,
) -> Result<SimilarityCurve> {
    let num_frames = store.num_frames(video_id)?;
    if range.end().0 >= num_frames {
        return Err(Error::InvalidInput(format!(
            "range {range} exceeds the {num_frames} frames of video {video_id:?}"
        )));
    }
    let points = range
        .frames()
        .map(|f| {
            scorer.top1(store, video_id, f).map(|d| match d {
                Some(d) => CurvePoint {
                    score: d.score,
                    bbox: Some(d.bbox),
                },
                None => CurvePoint { score: 0.0, bbox: None },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SimilarityCurve::new(range.start(), points)
}

/// Scores every frame of `range` against `crop`.
pub fn score_frames(
    store: &dyn FrameSource,
    video_id: &str,
    crop: &GrayImage,
    range: FrameSpan,
    scorer: &dyn FrameScorer,
) -> Result<SimilarityCurve> {
    let prepared = scorer.prepare(crop, video_id, store)?;
    score_frames_prepared(store, video_id, range, prepared.as_ref())
}

/// Highest-scoring frame among points carrying a box; on equal scores the
/// latest frame wins.
pub fn detect_peak(curve: &SimilarityCurve) -> Result<Peak> {
    curve
        .iter()
        .filter_map(|(frame, p)| {
            p.bbox.map(|bbox| Peak {
                frame,
                bbox,
                score: p.score,
            })
        })
        .fold(None, |best: Option<Peak>, p| match best {
            Some(b) if b.score > p.score => Some(b),
            _ => Some(p),
        })
        .ok_or(Error::NoProposal)
}
