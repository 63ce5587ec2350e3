//! Domain types and spatio-temporal overlap measures.
//!
//! Boxes use continuous pixel coordinates `(x, y, w, h)` with area `w * h`.
//! Frame spans are inclusive on both ends, so `[s, e]` holds `e - s + 1`
//! frames. Everything here is an immutable value type and every function is
//! pure.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinal of a frame within one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameIndex(pub u32);

impl FrameIndex {
    pub fn get(self) -> u32 {
        self.0
    }

    pub fn checked_sub(self, n: u32) -> Option<FrameIndex> {
        self.0.checked_sub(n).map(FrameIndex)
    }

    pub fn offset(self, n: u32) -> FrameIndex {
        FrameIndex(self.0 + n)
    }
}

impl fmt::Display for FrameIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for FrameIndex {
    fn from(v: u32) -> Self {
        FrameIndex(v)
    }
}

/// Axis-aligned rectangle, left/top edge plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Unvalidated wire form of [`BBox`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(r: RawBox) -> Result<Self> {
        BBox::new(r.x, r.y, r.w, r.h)
    }
}

impl From<BBox> for RawBox {
    fn from(b: BBox) -> Self {
        RawBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let reason = if !(x.is_finite() && y.is_finite()) {
            Some("origin must be finite")
        } else if !(w.is_finite() && h.is_finite()) {
            Some("extent must be finite")
        } else if !(w > 0.0 && h > 0.0) {
            Some("width and height must be positive")
        } else {
            None
        };
        match reason {
            Some(reason) => Err(Error::InvalidBox { x, y, w, h, reason }),
            None => Ok(BBox { x, y, w, h }),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn diagonal(&self) -> f64 {
        self.w.hypot(self.h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<BBox> {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Grows the box by `margin` on every side.
    pub fn expand(&self, margin: f64) -> Result<BBox> {
        BBox::new(
            self.x - margin,
            self.y - margin,
            self.w + 2.0 * margin,
            self.h + 2.0 * margin,
        )
    }

    /// Intersection with the frame rectangle `[0, width] x [0, height]`;
    /// `None` when nothing of positive area remains.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width as f64);
        let y1 = self.bottom().min(height as f64);
        BBox::new(x0, y0, x1 - x0, y1 - y0).ok()
    }

    /// Area shared by `self` and `other`, using the same edge arithmetic as
    /// [`box_iou`] so an identical pair intersects in exactly its own area.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    // Area expressed through the edges, matching `intersection_area` bit for
    // bit on identical boxes.
    fn edge_area(&self) -> f64 {
        (self.right() - self.x) * (self.bottom() - self.y)
    }
}

/// Inclusive frame interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameSpan {
    start: FrameIndex,
    end: FrameIndex,
}

impl FrameSpan {
    pub fn new(start: FrameIndex, end: FrameIndex) -> Result<Self> {
        if start > end {
            return Err(Error::InvalidSpan {
                start: start.0,
                end: end.0,
            });
        }
        Ok(FrameSpan { start, end })
    }

    pub fn start(&self) -> FrameIndex {
        self.start
    }

    pub fn end(&self) -> FrameIndex {
        self.end
    }

    pub fn len(&self) -> u32 {
        self.end.0 - self.start.0 + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, frame: FrameIndex) -> bool {
        self.start <= frame && frame <= self.end
    }

    pub fn frames(&self) -> impl Iterator<Item = FrameIndex> {
        (self.start.0..=self.end.0).map(FrameIndex)
    }
}

impl fmt::Display for FrameSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// Temporally contiguous run of boxes, one per frame from `start` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrack")]
pub struct ResponseTrack {
    video_id: String,
    start: FrameIndex,
    boxes: Vec<BBox>,
}

#[derive(Deserialize)]
struct RawTrack {
    video_id: String,
    start: FrameIndex,
    boxes: Vec<BBox>,
}

impl TryFrom<RawTrack> for ResponseTrack {
    type Error = Error;

    fn try_from(r: RawTrack) -> Result<Self> {
        ResponseTrack::new(r.video_id, r.start, r.boxes)
    }
}

impl ResponseTrack {
    pub fn new(video_id: impl Into<String>, start: FrameIndex, boxes: Vec<BBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::InvalidTrack("a track needs at least one box".into()));
        }
        if u32::try_from(boxes.len())
            .ok()
            .and_then(|n| start.0.checked_add(n - 1))
            .is_none()
        {
            return Err(Error::InvalidTrack("track end overflows the frame index".into()));
        }
        Ok(ResponseTrack {
            video_id: video_id.into(),
            start,
            boxes,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn start(&self) -> FrameIndex {
        self.start
    }

    pub fn end(&self) -> FrameIndex {
        FrameIndex(self.start.0 + self.boxes.len() as u32 - 1)
    }

    pub fn span(&self) -> FrameSpan {
        FrameSpan {
            start: self.start,
            end: self.end(),
        }
    }

    pub fn boxes(&self) -> &[BBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn box_at(&self, frame: FrameIndex) -> Option<&BBox> {
        frame
            .0
            .checked_sub(self.start.0)
            .and_then(|i| self.boxes.get(i as usize))
    }

    /// `(frame, box)` pairs in temporal order.
    pub fn iter(&self) -> impl Iterator<Item = (FrameIndex, &BBox)> {
        self.boxes
            .iter()
            .enumerate()
            .map(move |(i, b)| (FrameIndex(self.start.0 + i as u32), b))
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<ResponseTrack> {
        let boxes = self
            .boxes
            .iter()
            .map(|b| b.translate(dx, dy))
            .collect::<Result<Vec<_>>>()?;
        ResponseTrack::new(self.video_id.clone(), self.start, boxes)
    }
}

/// A track paired with the confidence it is ranked by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrack {
    pub track: ResponseTrack,
    pub confidence: f64,
}

impl ScoredTrack {
    pub fn new(track: ResponseTrack, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() {
            return Err(Error::InvalidTrack(format!(
                "confidence must be finite, got {confidence}"
            )));
        }
        Ok(ScoredTrack { track, confidence })
    }
}

/// A visual query: find the latest appearance of the object in `crop_box`
/// (on frame `crop_frame` of `crop_video_id`) before `query_frame` of `video_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualQuery {
    pub query_id: String,
    pub video_id: String,
    pub query_frame: FrameIndex,
    pub crop_video_id: String,
    pub crop_frame: FrameIndex,
    pub crop_box: BBox,
}

impl VisualQuery {
    pub fn new(
        query_id: impl Into<String>,
        video_id: impl Into<String>,
        query_frame: FrameIndex,
        crop_video_id: impl Into<String>,
        crop_frame: FrameIndex,
        crop_box: BBox,
    ) -> Result<Self> {
        let query_id = query_id.into();
        if query_frame.0 < 1 {
            return Err(Error::InvalidQuery(format!(
                "{query_id}: query frame must be at least 1"
            )));
        }
        Ok(VisualQuery {
            query_id,
            video_id: video_id.into(),
            query_frame,
            crop_video_id: crop_video_id.into(),
            crop_frame,
            crop_box,
        })
    }

    /// Frames a response may occupy: `[0, q - 1]`.
    pub fn search_span(&self) -> FrameSpan {
        FrameSpan {
            start: FrameIndex(0),
            end: FrameIndex(self.query_frame.0 - 1),
        }
    }
}

/// Intersection over union of two boxes; 0 when disjoint.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.edge_area() + b.edge_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Overlap of two inclusive frame intervals, counted in frames.
pub fn temporal_iou(a: FrameSpan, b: FrameSpan) -> f64 {
    let lo = a.start.0.max(b.start.0);
    let hi = a.end.0.min(b.end.0);
    let inter = if hi >= lo { (hi - lo + 1) as u64 } else { 0 };
    let union = a.len() as u64 + b.len() as u64 - inter;
    inter as f64 / union as f64
}

/// Volumetric tube IoU: summed per-frame intersection area over summed
/// per-frame union area. A frame covered by only one track adds that
/// track's full box area to the union.
pub fn st_iou(pred: &ResponseTrack, gt: &ResponseTrack) -> Result<f64> {
    if pred.video_id != gt.video_id {
        return Err(Error::VideoMismatch {
            left: pred.video_id.clone(),
            right: gt.video_id.clone(),
        });
    }
    let lo = pred.start.min(gt.start).0;
    let hi = pred.end().max(gt.end()).0;
    let mut inter = 0.0;
    let mut union = 0.0;
    for f in lo..=hi {
        let f = FrameIndex(f);
        match (pred.box_at(f), gt.box_at(f)) {
            (Some(p), Some(g)) => {
                let i = p.intersection_area(g);
                inter += i;
                union += p.edge_area() + g.edge_area() - i;
            }
            (Some(only), None) | (None, Some(only)) => union += only.edge_area(),
            (None, None) => {}
        }
    }
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn span(s: u32, e: u32) -> FrameSpan {
        FrameSpan::new(FrameIndex(s), FrameIndex(e)).unwrap()
    }

    #[test]
    fn box_iou_examples() {
        assert_eq!(box_iou(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(box_iou(&bb(0., 0., 1., 1.), &bb(5., 5., 1., 1.)), 0.0);
        // inter 1, union 4 + 4 - 1
        let v = box_iou(&bb(0., 0., 2., 2.), &bb(1., 1., 2., 2.));
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        assert_eq!(box_iou(&bb(0., 0., 2., 2.), &bb(2., 0., 2., 2.)), 0.0);
    }

    #[test]
    fn temporal_iou_examples() {
        assert_eq!(temporal_iou(span(3, 7), span(3, 7)), 1.0);
        // {2,3,4} of {0..6}
        assert!((temporal_iou(span(0, 4), span(2, 6)) - 3.0 / 7.0).abs() < 1e-12);
        assert_eq!(temporal_iou(span(0, 1), span(5, 9)), 0.0);
        assert_eq!(temporal_iou(span(4, 4), span(4, 4)), 1.0);
    }

    #[test]
    fn st_iou_examples() {
        let b = bb(0., 0., 2., 2.);
        let pred = ResponseTrack::new("v", FrameIndex(0), vec![b, b]).unwrap();
        let gt = ResponseTrack::new("v", FrameIndex(1), vec![b, b]).unwrap();
        assert_eq!(st_iou(&pred, &pred).unwrap(), 1.0);
        // inter 4 on frame 1; union 4 + 4 + 4
        assert!((st_iou(&pred, &gt).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let a = ResponseTrack::new("v", FrameIndex(5), vec![bb(0., 0., 2., 2.)]).unwrap();
        let c = ResponseTrack::new("v", FrameIndex(5), vec![bb(1., 1., 2., 2.)]).unwrap();
        assert_eq!(st_iou(&a, &c).unwrap(), box_iou(&a.boxes()[0], &c.boxes()[0]));
    }

    #[test]
    fn st_iou_rejects_cross_video_pairs() {
        let a = ResponseTrack::new("v1", FrameIndex(0), vec![bb(0., 0., 1., 1.)]).unwrap();
        let b = ResponseTrack::new("v2", FrameIndex(0), vec![bb(0., 0., 1., 1.)]).unwrap();
        assert!(matches!(st_iou(&a, &b), Err(Error::VideoMismatch { .. })));
    }

    #[test]
    fn invalid_boxes_are_rejected() {
        assert!(BBox::new(0., 0., 0., 1.).is_err());
        assert!(BBox::new(0., 0., 1., -1.).is_err());
        assert!(BBox::new(f64::NAN, 0., 1., 1.).is_err());
        assert!(BBox::new(0., f64::INFINITY, 1., 1.).is_err());
        assert!(serde_json::from_str::<BBox>(r#"{"x":0,"y":0,"w":0,"h":3}"#).is_err());
    }

    #[test]
    fn track_invariants() {
        assert!(ResponseTrack::new("v", FrameIndex(0), vec![]).is_err());
        let t = ResponseTrack::new("v", FrameIndex(3), vec![bb(0., 0., 1., 1.); 4]).unwrap();
        assert_eq!(t.end(), FrameIndex(6));
        assert!(t.box_at(FrameIndex(2)).is_none());
        assert!(t.box_at(FrameIndex(6)).is_some());
        assert!(t.box_at(FrameIndex(7)).is_none());
        assert!(serde_json::from_str::<ResponseTrack>(r#"{"video_id":"v","start":0,"boxes":[]}"#).is_err());
    }

    #[test]
    fn query_frame_must_leave_room_for_a_response() {
        let crop = bb(0., 0., 4., 4.);
        assert!(VisualQuery::new("q", "v", FrameIndex(0), "v", FrameIndex(0), crop).is_err());
        let q = VisualQuery::new("q", "v", FrameIndex(1), "v", FrameIndex(0), crop).unwrap();
        assert_eq!(q.search_span(), span(0, 0));
    }

    #[test]
    fn clamp_to_frame() {
        let b = bb(-5., -5., 10., 10.);
        let c = b.clamp_to(100, 100).unwrap();
        assert_eq!((c.x(), c.y(), c.w(), c.h()), (0., 0., 5., 5.));
        assert!(bb(200., 0., 5., 5.).clamp_to(100, 100).is_none());
    }
}
