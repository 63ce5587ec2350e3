//! Visual-query 2D localization toolkit.
//!
//! Given a visual crop of an object and a query frame, find the latest
//! contiguous run of frames before the query frame in which the object is
//! visible, with a box on each frame. The crate provides:
//!
//! * [`geometry`]: boxes, frame spans, response tracks and their overlaps;
//! * [`metrics`]: stAP / tAP / success / recovery and frame-level AP/AR;
//! * [`pipeline`]: per-frame scoring, peak detection and bidirectional tracking;
//! * [`sampler`]: proposal labelling, hard-negative mining and batch balancing;
//! * [`harness`]: deterministic parallel evaluation of whole workloads;
//! * [`io`] and [`synth`]: file formats and a synthetic dataset generator.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{
    box_iou, st_iou, temporal_iou, BBox, FrameIndex, FrameSpan, ResponseTrack, ScoredTrack, VisualQuery,
};
pub use harness::{evaluate_parallel, Evaluation, HarnessConfig, RunReport, Workload};
pub use metrics::{
    average_precision, frame_detection_eval, recovery, st_ap, success_rate, t_ap, EvalReport, FrameDetections,
    FrameEvalMode, MetricConfig, QueryResult,
};
pub use pipeline::{run_query, QueryConfig, QueryOutcome};
