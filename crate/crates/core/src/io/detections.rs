//! Per-frame detector outputs, replayed by the file-based scorer.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FrameIndex;
use crate::pipeline::scorer::Detection;

pub const FORMAT: &str = "vq2d.detections";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub video_id: String,
    pub frame: FrameIndex,
    pub detections: Vec<Detection>,
}

/// Detections keyed by video, then frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionsFile {
    videos: BTreeMap<String, BTreeMap<FrameIndex, Vec<Detection>>>,
}

impl DetectionsFile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one frame's detections; frames of a video must arrive in
    /// strictly increasing order.
    pub fn push_frame(&mut self, video_id: &str, frame: FrameIndex, detections: Vec<Detection>) -> Result<()> {
        if let Some(d) = detections.iter().find(|d| !d.score.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "video {video_id:?} frame {frame}: score {} is not finite",
                d.score
            )));
        }
        let frames = self.videos.entry(video_id.to_owned()).or_default();
        if let Some((&last, _)) = frames.last_key_value() {
            if frame <= last {
                return Err(Error::InvalidInput(format!(
                    "video {video_id:?}: frame {frame} follows frame {last}; frames must be sorted and unique"
                )));
            }
        }
        frames.insert(frame, detections);
        Ok(())
    }

    /// Detections on a frame; empty when the frame is absent.
    pub fn frame(&self, video_id: &str, frame: FrameIndex) -> &[Detection] {
        self.videos
            .get(video_id)
            .and_then(|v| v.get(&frame))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn videos(&self) -> impl Iterator<Item = &str> {
        self.videos.keys().map(String::as_str)
    }

    pub fn records(&self) -> Vec<DetectionRecord> {
        self.videos
            .iter()
            .flat_map(|(v, frames)| {
                frames.iter().map(move |(&frame, dets)| DetectionRecord {
                    video_id: v.clone(),
                    frame,
                    detections: dets.clone(),
                })
            })
            .collect()
    }

    pub fn from_records(records: Vec<DetectionRecord>) -> Result<Self> {
        let mut out = DetectionsFile::new();
        for r in records {
            out.push_frame(&r.video_id, r.frame, r.detections)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let records: Vec<DetectionRecord> = super::read_records(path, FORMAT)?;
        Self::from_records(records).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        super::write_records(path, FORMAT, &self.records())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    fn det(score: f64) -> Detection {
        Detection {
            bbox: BBox::new(1., 2., 3., 4.).unwrap(),
            score,
        }
    }

    #[test]
    fn frames_must_be_sorted() {
        let mut d = DetectionsFile::new();
        d.push_frame("v", FrameIndex(3), vec![det(0.5)]).unwrap();
        assert!(d.push_frame("v", FrameIndex(3), vec![]).is_err());
        assert!(d.push_frame("v", FrameIndex(1), vec![]).is_err());
        d.push_frame("w", FrameIndex(0), vec![]).unwrap();
        assert!(d.push_frame("v", FrameIndex(4), vec![det(f64::INFINITY)]).is_err());
    }

    #[test]
    fn lookups() {
        let mut d = DetectionsFile::new();
        d.push_frame("v", FrameIndex(3), vec![det(0.5), det(0.7)]).unwrap();
        assert_eq!(d.frame("v", FrameIndex(3)).len(), 2);
        assert!(d.frame("v", FrameIndex(4)).is_empty());
        assert!(d.frame("x", FrameIndex(3)).is_empty());
    }

    #[test]
    fn save_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut d = DetectionsFile::new();
        d.push_frame("b", FrameIndex(0), vec![det(0.25)]).unwrap();
        d.push_frame("a", FrameIndex(2), vec![]).unwrap();
        d.save(&path).unwrap();
        assert_eq!(DetectionsFile::load(&path).unwrap(), d);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains("\"video_id\":\"a\""));
        assert!(text.contains("\"box\":{\"x\":1.0,\"y\":2.0,\"w\":3.0,\"h\":4.0}"));
    }
}
