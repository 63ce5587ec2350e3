//! Retrieval metrics over per-query predictions, and frame-level detection
//! AP/AR with or without negative (object-absent) frames.
//!
//! All AP values use the uninterpolated all-points form: the sum of
//! precision at every true-positive rank divided by the number of ground
//! truths. Confidence ties keep input order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, st_iou, temporal_iou, BBox, FrameIndex, ResponseTrack, ScoredTrack};

/// Default spatio-temporal / temporal IoU threshold for stAP and tAP.
pub const DEFAULT_AP_THRESHOLD: f64 = 0.25;
/// Minimal tube IoU for a query to count as a success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.05;
/// Per-frame box IoU needed for a ground-truth frame to count as recovered.
pub const DEFAULT_RECOVERY_IOU: f64 = 0.5;

/// Uninterpolated average precision of a ranked list of
/// `(confidence, is_true_positive)` pairs.
pub fn average_precision(ranked: &[(f64, bool)], num_ground_truth: usize) -> Result<f64> {
    if num_ground_truth == 0 {
        return Err(Error::UndefinedMetric("average precision with zero ground truths"));
    }
    if let Some((c, _)) = ranked.iter().find(|(c, _)| !c.is_finite()) {
        return Err(Error::InvalidInput(format!("confidence {c} is not finite")));
    }
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    // stable: equal confidences keep input order
    order.sort_by(|&a, &b| ranked[b].0.total_cmp(&ranked[a].0));

    let mut tp = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if ranked[i].1 {
            tp += 1;
            sum += tp as f64 / (rank + 1) as f64;
        }
    }
    if tp > num_ground_truth {
        return Err(Error::InvalidInput(format!(
            "{tp} true positives exceed {num_ground_truth} ground truths"
        )));
    }
    Ok(sum / num_ground_truth as f64)
}

/// One query's prediction (if any) and its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub query_id: String,
    pub prediction: Option<ScoredTrack>,
    pub ground_truth: ResponseTrack,
}

impl QueryResult {
    pub fn new(
        query_id: impl Into<String>,
        prediction: Option<ScoredTrack>,
        ground_truth: ResponseTrack,
    ) -> Result<Self> {
        if let Some(p) = &prediction {
            if p.track.video_id() != ground_truth.video_id() {
                return Err(Error::VideoMismatch {
                    left: p.track.video_id().to_owned(),
                    right: ground_truth.video_id().to_owned(),
                });
            }
        }
        Ok(QueryResult {
            query_id: query_id.into(),
            prediction,
            ground_truth,
        })
    }

    fn st_iou(&self) -> Result<Option<f64>> {
        self.prediction
            .as_ref()
            .map(|p| st_iou(&p.track, &self.ground_truth))
            .transpose()
    }
}

fn check_unique(results: &[QueryResult]) -> Result<()> {
    let mut seen = HashSet::with_capacity(results.len());
    for r in results {
        if !seen.insert(r.query_id.as_str()) {
            return Err(Error::DuplicateQuery(r.query_id.clone()));
        }
    }
    Ok(())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "IoU threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

fn pooled_ap<F>(results: &[QueryResult], threshold: f64, overlap: F) -> Result<f64>
where
    F: Fn(&ScoredTrack, &ResponseTrack) -> Result<f64>,
{
    check_threshold(threshold)?;
    check_unique(results)?;
    let mut ranked = Vec::with_capacity(results.len());
    for r in results {
        if let Some(p) = &r.prediction {
            let hit = overlap(p, &r.ground_truth)? >= threshold;
            ranked.push((p.confidence, hit));
        }
    }
    average_precision(&ranked, results.len())
}

/// Spatio-temporal AP: a prediction is correct iff its tube IoU with the
/// ground truth reaches `threshold`. Unanswered queries are missed ground
/// truths.
pub fn st_ap(results: &[QueryResult], threshold: f64) -> Result<f64> {
    pooled_ap(results, threshold, |p, gt| st_iou(&p.track, gt))
}

/// Temporal AP: as [`st_ap`] but matching on the temporal extent alone.
pub fn t_ap(results: &[QueryResult], threshold: f64) -> Result<f64> {
    pooled_ap(results, threshold, |p, gt| Ok(temporal_iou(p.track.span(), gt.span())))
}

/// Percentage of queries answered with tube IoU at least `threshold`.
pub fn success_rate(results: &[QueryResult], threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("success rate over zero queries"));
    }
    let mut hits = 0usize;
    for r in results {
        if r.st_iou()?.is_some_and(|v| v >= threshold) {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / results.len() as f64)
}

/// Mean (in percent) over queries of the fraction of ground-truth frames on
/// which the prediction's box reaches `box_threshold` IoU.
pub fn recovery(results: &[QueryResult], box_threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::UndefinedMetric("recovery over zero queries"));
    }
    let mut total = 0.0;
    for r in results {
        let Some(p) = &r.prediction else { continue };
        if p.track.video_id() != r.ground_truth.video_id() {
            return Err(Error::VideoMismatch {
                left: p.track.video_id().to_owned(),
                right: r.ground_truth.video_id().to_owned(),
            });
        }
        let recovered = r
            .ground_truth
            .iter()
            .filter(|(f, g)| p.track.box_at(*f).is_some_and(|b| box_iou(b, g) >= box_threshold))
            .count();
        total += recovered as f64 / r.ground_truth.len() as f64;
    }
    Ok(100.0 * total / results.len() as f64)
}

/// Thresholds used by [`EvalReport::compute`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricConfig {
    pub st_threshold: f64,
    pub t_threshold: f64,
    pub success_threshold: f64,
    pub recovery_iou: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            st_threshold: DEFAULT_AP_THRESHOLD,
            t_threshold: DEFAULT_AP_THRESHOLD,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            recovery_iou: DEFAULT_RECOVERY_IOU,
        }
    }
}

/// Flat summary record of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub st_ap_25: f64,
    pub t_ap_25: f64,
    /// Percentage.
    pub success_rate: f64,
    /// Percentage.
    pub recovery: f64,
    pub num_queries: usize,
}

impl EvalReport {
    pub fn compute(results: &[QueryResult], cfg: &MetricConfig) -> Result<Self> {
        Ok(EvalReport {
            st_ap_25: st_ap(results, cfg.st_threshold)?,
            t_ap_25: t_ap(results, cfg.t_threshold)?,
            success_rate: success_rate(results, cfg.success_threshold)?,
            recovery: recovery(results, cfg.recovery_iou)?,
            num_queries: results.len(),
        })
    }
}

/// Detections produced on one frame, with its ground truth when the query
/// object is visible there.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: FrameIndex,
    detections: Vec<(BBox, f64)>,
    gt_box: Option<BBox>,
}

impl FrameDetections {
    pub fn positive(frame: FrameIndex, gt_box: BBox, detections: Vec<(BBox, f64)>) -> Result<Self> {
        Self::new(frame, Some(gt_box), detections)
    }

    pub fn negative(frame: FrameIndex, detections: Vec<(BBox, f64)>) -> Result<Self> {
        Self::new(frame, None, detections)
    }

    pub fn new(frame: FrameIndex, gt_box: Option<BBox>, detections: Vec<(BBox, f64)>) -> Result<Self> {
        if let Some((_, s)) = detections.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "frame {frame}: detection score {s} is not finite"
            )));
        }
        Ok(FrameDetections {
            frame,
            detections,
            gt_box,
        })
    }

    pub fn is_positive_frame(&self) -> bool {
        self.gt_box.is_some()
    }

    pub fn gt_box(&self) -> Option<&BBox> {
        self.gt_box.as_ref()
    }

    pub fn detections(&self) -> &[(BBox, f64)] {
        &self.detections
    }

    /// Detection indices by descending score, ties in input order.
    fn ranked(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.detections.len()).collect();
        order.sort_by(|&a, &b| self.detections[b].1.total_cmp(&self.detections[a].1));
        order
    }
}

/// Which frames take part in frame-level evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameEvalMode {
    /// Object-absent frames are dropped before scoring.
    PositiveOnly,
    /// Every detection on an object-absent frame is a false positive.
    PositiveAndNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    /// Mean AP over IoU 0.50:0.05:0.95.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Recall with at most ten detections per frame, averaged over the same
    /// IoU thresholds.
    pub ar10: f64,
}

const MAX_DETS_PER_FRAME: usize = 10;

fn coco_thresholds() -> impl Iterator<Item = f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Greedy matching of one frame at one IoU threshold. Returns, per detection
/// in score order, whether it matched the frame's ground truth.
fn match_frame(fd: &FrameDetections, order: &[usize], threshold: f64) -> Vec<bool> {
    let mut matched = false;
    order
        .iter()
        .map(|&i| match fd.gt_box() {
            Some(g) if !matched && box_iou(&fd.detections[i].0, g) >= threshold => {
                matched = true;
                true
            }
            _ => false,
        })
        .collect()
}

/// COCO-style AP / AP50 / AP75 / AR@10 over per-frame detections.
pub fn frame_detection_eval(frames: &[FrameDetections], mode: FrameEvalMode) -> Result<DetectionSummary> {
    let frames: Vec<&FrameDetections> = frames
        .iter()
        .filter(|f| mode == FrameEvalMode::PositiveAndNegative || f.is_positive_frame())
        .collect();
    let num_gt = frames.iter().filter(|f| f.is_positive_frame()).count();
    if num_gt == 0 {
        return Err(Error::UndefinedMetric("frame detection AP without positive frames"));
    }
    let orders: Vec<Vec<usize>> = frames.iter().map(|f| f.ranked()).collect();

    let mut aps = Vec::with_capacity(10);
    let mut recalls = Vec::with_capacity(10);
    for t in coco_thresholds() {
        let mut ranked = Vec::new();
        let mut recalled = 0usize;
        for (fd, order) in frames.iter().zip(&orders) {
            let hits = match_frame(fd, order, t);
            recalled += hits.iter().take(MAX_DETS_PER_FRAME).filter(|&&h| h).count();
            ranked.extend(order.iter().zip(hits).map(|(&i, hit)| (fd.detections[i].1, hit)));
        }
        aps.push(average_precision(&ranked, num_gt)?);
        recalls.push(recalled as f64 / num_gt as f64);
    }
    Ok(DetectionSummary {
        ap: aps.iter().sum::<f64>() / aps.len() as f64,
        ap50: aps[0],
        ap75: aps[5],
        ar10: recalls.iter().sum::<f64>() / recalls.len() as f64,
    })
}
