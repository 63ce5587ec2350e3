//! Template-matching tracker run forward and backward from the peak.

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameIndex, FrameSpan, ResponseTrack};
use crate::pipeline::curve::Peak;
use crate::pipeline::frames::{crop_image, FrameSource};
use crate::pipeline::ncc::{Plane, Template};

pub const DEFAULT_STOP_THRESHOLD: f64 = 0.6;

/// Padding around the previous box that bounds the next search window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMargin {
    /// Half the diagonal of the previous box.
    HalfDiagonal,
    Pixels(f64),
}

impl SearchMargin {
    fn resolve(&self, b: &BBox) -> f64 {
        match *self {
            SearchMargin::HalfDiagonal => b.diagonal() / 2.0,
            SearchMargin::Pixels(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateUpdate {
    /// Keep matching the peak template.
    None,
    /// Re-cut the template from every accepted match.
    EveryFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// A direction stops at the first frame whose best match scores below this.
    pub stop_threshold: f64,
    pub search_margin: SearchMargin,
    pub template_update: TemplateUpdate,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            search_margin: SearchMargin::HalfDiagonal,
            template_update: TemplateUpdate::None,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.stop_threshold.is_finite() {
            return Err(Error::Config("stop threshold must be finite".into()));
        }
        if let SearchMargin::Pixels(p) = self.search_margin {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Config(format!(
                    "search margin {p} must be a non-negative number"
                )));
            }
        }
        Ok(())
    }
}

struct Direction<'a> {
    store: &'a dyn FrameSource,
    video_id: &'a str,
    cfg: &'a TrackerConfig,
}

impl Direction<'_> {
    /// Follows the object through `frames` until the match falls below the
    /// stop threshold.
    fn run(&self, frames: impl Iterator<Item = FrameIndex>, start: BBox, template: &GrayImage) -> Result<Vec<BBox>> {
        let mut tpl = Template::new(template);
        let mut prev = start;
        let mut out = Vec::new();
        for f in frames {
            let img = self.store.frame(self.video_id, f)?;
            let plane = Plane::new(&img);
            let region = prev.expand(self.cfg.search_margin.resolve(&prev))?;
            let Some(m) = tpl.best_match_in(&plane, &region) else {
                break;
            };
            if m.score < self.cfg.stop_threshold {
                break;
            }
            if self.cfg.template_update == TemplateUpdate::EveryFrame {
                tpl = Template::new(&crop_image(&img, &m.bbox)?);
            }
            prev = m.bbox;
            out.push(m.bbox);
        }
        Ok(out)
    }
}

/// Grows a track around `peak` in both directions within `bounds`.
///
/// The returned track always contains the peak frame; its boxes are clamped
/// to the frame.
pub fn track_bidirectional(
    store: &dyn FrameSource,
    video_id: &str,
    peak: &Peak,
    template: &GrayImage,
    bounds: FrameSpan,
    cfg: &TrackerConfig,
) -> Result<ResponseTrack> {
    cfg.validate()?;
    if !bounds.contains(peak.frame) {
        return Err(Error::InvalidInput(format!(
            "peak frame {} lies outside the tracking bounds {bounds}",
            peak.frame
        )));
    }
    let peak_img = store.frame(video_id, peak.frame)?;
    let (w, h) = peak_img.dimensions();
    let peak_box = peak
        .bbox
        .clamp_to(w, h)
        .ok_or_else(|| Error::InvalidInput(format!("peak box on frame {} lies outside the frame", peak.frame)))?;
    if template.width() > w || template.height() > h {
        return Err(Error::TemplateTooLarge {
            template_w: template.width(),
            template_h: template.height(),
            frame_w: w,
            frame_h: h,
        });
    }

    let dir = Direction { store, video_id, cfg };
    let forward = dir.run((peak.frame.0 + 1..=bounds.end().0).map(FrameIndex), peak_box, template)?;
    let backward = dir.run(
        (bounds.start().0..peak.frame.0).rev().map(FrameIndex),
        peak_box,
        template,
    )?;

    let start = FrameIndex(peak.frame.0 - backward.len() as u32);
    let boxes: Vec<BBox> = backward
        .into_iter()
        .rev()
        .chain(std::iter::once(peak_box))
        .chain(forward)
        .map(|b| b.clamp_to(w, h).unwrap_or(b))
        .collect();
    ResponseTrack::new(video_id, start, boxes)
}
