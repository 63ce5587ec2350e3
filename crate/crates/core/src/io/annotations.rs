//! Query annotations: visual query plus ground-truth response track.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameIndex, RawBox, ResponseTrack, VisualQuery};
use crate::harness::Workload;

pub const FORMAT: &str = "vq2d.annotations";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropRecord {
    pub video_id: String,
    pub frame: u32,
    #[serde(rename = "box")]
    pub bbox: RawBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub start: u32,
    /// Redundant with `start + boxes.len() - 1`; checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<u32>,
    pub boxes: Vec<RawBox>,
}

/// Wire form of one query, validated by [`AnnotationRecord::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub query_id: String,
    pub video_id: String,
    pub query_frame: u32,
    pub crop: CropRecord,
    pub gt_track: TrackRecord,
}

/// A validated query with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub query: VisualQuery,
    pub ground_truth: ResponseTrack,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<Annotation> {
        let field = |field: &'static str, message: String| Error::Record {
            query_id: self.query_id.clone(),
            field,
            message,
        };
        let to_box = |r: &RawBox, field_name: &'static str| {
            BBox::new(r.x, r.y, r.w, r.h).map_err(|e| field(field_name, e.to_string()))
        };

        if self.query_id.is_empty() {
            return Err(field("query_id", "must not be empty".into()));
        }
        if self.query_frame < 1 {
            return Err(field("query_frame", "must be at least 1".into()));
        }
        let crop_box = to_box(&self.crop.bbox, "crop.box")?;
        let query = VisualQuery::new(
            self.query_id.clone(),
            self.video_id.clone(),
            FrameIndex(self.query_frame),
            self.crop.video_id.clone(),
            FrameIndex(self.crop.frame),
            crop_box,
        )
        .map_err(|e| field("query_frame", e.to_string()))?;

        let t = &self.gt_track;
        if t.boxes.is_empty() {
            return Err(field("gt_track.boxes", "track has no boxes".into()));
        }
        let implied_end = t.start as u64 + t.boxes.len() as u64 - 1;
        if let Some(end) = t.end {
            if end as u64 != implied_end {
                return Err(field(
                    "gt_track.end",
                    format!(
                        "not contiguous: {} boxes from frame {} end at {implied_end}, not {end}",
                        t.boxes.len(),
                        t.start
                    ),
                ));
            }
        }
        if implied_end >= self.query_frame as u64 {
            return Err(field(
                "gt_track",
                format!(
                    "track ends at frame {implied_end}, not before query frame {}",
                    self.query_frame
                ),
            ));
        }
        let boxes = t
            .boxes
            .iter()
            .map(|b| to_box(b, "gt_track.boxes"))
            .collect::<Result<Vec<_>>>()?;
        let ground_truth = ResponseTrack::new(self.video_id.clone(), FrameIndex(t.start), boxes)
            .map_err(|e| field("gt_track", e.to_string()))?;
        Ok(Annotation { query, ground_truth })
    }
}

impl From<&Annotation> for AnnotationRecord {
    fn from(a: &Annotation) -> Self {
        let q = &a.query;
        AnnotationRecord {
            query_id: q.query_id.clone(),
            video_id: q.video_id.clone(),
            query_frame: q.query_frame.0,
            crop: CropRecord {
                video_id: q.crop_video_id.clone(),
                frame: q.crop_frame.0,
                bbox: q.crop_box.into(),
            },
            gt_track: TrackRecord {
                start: a.ground_truth.start().0,
                end: Some(a.ground_truth.end().0),
                boxes: a.ground_truth.boxes().iter().map(|&b| b.into()).collect(),
            },
        }
    }
}

/// Validates every record and rejects duplicate query ids.
pub fn validate_records(records: &[AnnotationRecord]) -> Result<Vec<Annotation>> {
    let mut seen = HashSet::new();
    records
        .iter()
        .map(|r| {
            if !seen.insert(r.query_id.as_str()) {
                return Err(Error::DuplicateQuery(r.query_id.clone()));
            }
            r.validate()
        })
        .collect()
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let records: Vec<AnnotationRecord> = super::read_records(path, FORMAT)?;
    validate_records(&records)
}

pub fn save_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let records: Vec<AnnotationRecord> = annotations.iter().map(AnnotationRecord::from).collect();
    super::write_records(path, FORMAT, &records)
}

/// Loads and validates an annotation file into an evaluation workload.
pub fn load_annotations(path: &Path) -> Result<Workload> {
    Workload::from_annotations(read_annotations(path)?)
}
