//! Per-frame top-1 scorers.

use std::sync::Arc;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{BBox, FrameIndex};
use crate::io::detections::DetectionsFile;
use crate::pipeline::frames::FrameSource;
use crate::pipeline::ncc::{NccParams, Plane, ScaledTemplates};

/// A scored box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
}

/// Produces the top-1 proposal of a frame against a visual crop.
///
/// Scorers are shared across evaluation workers, so they must be stateless
/// or internally synchronized, and deterministic for fixed inputs.
pub trait FrameScorer: Send + Sync {
    /// Per-query setup (template pyramids and the like).
    fn prepare<'a>(
        &'a self,
        crop: &GrayImage,
        video_id: &str,
        store: &dyn FrameSource,
    ) -> Result<Box<dyn CropScorer + 'a>>;
}

pub trait CropScorer {
    /// Best proposal on `frame`, or `None` when the scorer has nothing there.
    fn top1(&self, store: &dyn FrameSource, video_id: &str, frame: FrameIndex) -> Result<Option<Detection>>;
}

/// Multi-scale NCC against the crop; always answers with its best window.
#[derive(Debug, Clone, Default)]
pub struct NccScorer {
    pub params: NccParams,
}

impl NccScorer {
    pub fn new(params: NccParams) -> Self {
        NccScorer { params }
    }
}

struct NccCropScorer {
    templates: ScaledTemplates,
}

impl FrameScorer for NccScorer {
    fn prepare<'a>(
        &'a self,
        crop: &GrayImage,
        video_id: &str,
        store: &dyn FrameSource,
    ) -> Result<Box<dyn CropScorer + 'a>> {
        let probe = store.frame(video_id, FrameIndex(0))?;
        let templates = ScaledTemplates::new(crop, &self.params, probe.width(), probe.height())?;
        Ok(Box::new(NccCropScorer { templates }))
    }
}

impl CropScorer for NccCropScorer {
    fn top1(&self, store: &dyn FrameSource, video_id: &str, frame: FrameIndex) -> Result<Option<Detection>> {
        let img = store.frame(video_id, frame)?;
        Ok(self.templates.best_match(&Plane::new(&img)).map(|m| Detection {
            bbox: m.bbox,
            score: m.score,
        }))
    }
}

/// Replays detections from a file; the highest-scoring detection of each
/// frame wins, ties going to the one listed first.
#[derive(Debug, Clone)]
pub struct DetectionsScorer {
    detections: Arc<DetectionsFile>,
}

impl DetectionsScorer {
    pub fn new(detections: Arc<DetectionsFile>) -> Self {
        DetectionsScorer { detections }
    }
}

struct ReplayScorer<'a> {
    detections: &'a DetectionsFile,
}

impl FrameScorer for DetectionsScorer {
    fn prepare<'a>(
        &'a self,
        _crop: &GrayImage,
        _video_id: &str,
        _store: &dyn FrameSource,
    ) -> Result<Box<dyn CropScorer + 'a>> {
        Ok(Box::new(ReplayScorer {
            detections: &self.detections,
        }))
    }
}

impl CropScorer for ReplayScorer<'_> {
    fn top1(&self, _store: &dyn FrameSource, video_id: &str, frame: FrameIndex) -> Result<Option<Detection>> {
        let dets = self.detections.frame(video_id, frame);
        Ok(dets.iter().fold(None, |best: Option<Detection>, d| match best {
            Some(b) if b.score >= d.score => Some(b),
            _ => Some(*d),
        }))
    }
}
