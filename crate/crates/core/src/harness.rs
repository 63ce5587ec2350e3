//! Parallel evaluation over a workload of video groups.
//!
//! Queries of one video group run sequentially on one worker; groups are
//! handed out to `workers` threads in a seeded random order. Results are
//! collected unordered and then sorted by query id before any metric is
//! computed, so the report and the per-query records do not depend on the
//! worker count or on scheduling.

use std::collections::{BTreeMap, HashSet};
use std::panic::{self, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ResponseTrack, VisualQuery};
use crate::io::annotations::Annotation;
use crate::io::predictions::{Outcome, QueryRecord};
use crate::metrics::{EvalReport, MetricConfig, QueryResult};
use crate::pipeline::{run_query, FrameScorer, FrameSource, QueryConfig, QueryOutcome};

/// All queries posed on one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoGroup {
    pub video_id: String,
    pub queries: Vec<VisualQuery>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    groups: Vec<VideoGroup>,
    ground_truth: BTreeMap<String, ResponseTrack>,
}

impl Workload {
    pub fn new(groups: Vec<VideoGroup>, ground_truth: BTreeMap<String, ResponseTrack>) -> Result<Self> {
        let mut videos = HashSet::new();
        let mut queries = HashSet::new();
        for g in &groups {
            if !videos.insert(g.video_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "video {:?} appears in two groups",
                    g.video_id
                )));
            }
            for q in &g.queries {
                if q.video_id != g.video_id {
                    return Err(Error::InvalidInput(format!(
                        "query {:?} on video {:?} filed under group {:?}",
                        q.query_id, q.video_id, g.video_id
                    )));
                }
                if !queries.insert(q.query_id.as_str()) {
                    return Err(Error::DuplicateQuery(q.query_id.clone()));
                }
                let gt = ground_truth
                    .get(&q.query_id)
                    .ok_or_else(|| Error::InvalidInput(format!("query {:?} has no ground truth", q.query_id)))?;
                if gt.video_id() != q.video_id {
                    return Err(Error::VideoMismatch {
                        left: q.video_id.clone(),
                        right: gt.video_id().to_owned(),
                    });
                }
            }
        }
        Ok(Workload { groups, ground_truth })
    }

    /// Groups annotations by video, in video-id order.
    pub fn from_annotations(annotations: Vec<Annotation>) -> Result<Self> {
        let mut by_video: BTreeMap<String, Vec<VisualQuery>> = BTreeMap::new();
        let mut ground_truth = BTreeMap::new();
        for a in annotations {
            if ground_truth.insert(a.query.query_id.clone(), a.ground_truth).is_some() {
                return Err(Error::DuplicateQuery(a.query.query_id));
            }
            by_video.entry(a.query.video_id.clone()).or_default().push(a.query);
        }
        let groups = by_video
            .into_iter()
            .map(|(video_id, queries)| VideoGroup { video_id, queries })
            .collect();
        Workload::new(groups, ground_truth)
    }

    pub fn groups(&self) -> &[VideoGroup] {
        &self.groups
    }

    pub fn ground_truth(&self) -> &BTreeMap<String, ResponseTrack> {
        &self.ground_truth
    }

    pub fn num_queries(&self) -> usize {
        self.groups.iter().map(|g| g.queries.len()).sum()
    }

    pub fn query(&self, query_id: &str) -> Option<&VisualQuery> {
        self.groups
            .iter()
            .flat_map(|g| &g.queries)
            .find(|q| q.query_id == query_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarnessConfig {
    pub workers: usize,
    pub shuffle_seed: u64,
    /// Videos handed to a worker as one unit.
    pub videos_per_group: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            shuffle_seed: 0,
            videos_per_group: 1,
        }
    }
}

/// Metrics plus outcome counts of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub metrics: EvalReport,
    pub answered: usize,
    pub no_response: usize,
    pub errored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: RunReport,
    /// Sorted by query id.
    pub records: Vec<QueryRecord>,
}

/// Completed-query counter shared by the workers; only ever increases.
#[derive(Debug, Default)]
pub struct Progress {
    completed: AtomicUsize,
    total: AtomicUsize,
}

impl Progress {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn completed(&self) -> usize {
        self.completed.load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }

    fn advance(&self, n: usize) {
        let done = self.completed.fetch_add(n, Ordering::SeqCst) + n;
        log::debug!("{done}/{} queries evaluated", self.total());
    }
}

/// Scores a set of per-query records against ground truth. Queries without
/// a record count as unanswered.
pub fn evaluate_records(
    records: &[QueryRecord],
    ground_truth: &BTreeMap<String, ResponseTrack>,
    cfg: &MetricConfig,
) -> Result<RunReport> {
    let mut by_id: BTreeMap<&str, &QueryRecord> = BTreeMap::new();
    for r in records {
        if !ground_truth.contains_key(&r.query_id) {
            return Err(Error::InvalidInput(format!(
                "prediction for unknown query {:?}",
                r.query_id
            )));
        }
        if by_id.insert(&r.query_id, r).is_some() {
            return Err(Error::DuplicateQuery(r.query_id.clone()));
        }
    }
    let (mut answered, mut no_response, mut errored) = (0, 0, 0);
    let mut results = Vec::with_capacity(ground_truth.len());
    for (id, gt) in ground_truth {
        let prediction = match by_id.get(id.as_str()) {
            Some(r) => {
                match r.outcome {
                    Outcome::Answered { .. } => answered += 1,
                    Outcome::NoResponse => no_response += 1,
                    Outcome::Error { .. } => errored += 1,
                }
                r.prediction()?
            }
            None => {
                no_response += 1;
                None
            }
        };
        results.push(QueryResult::new(id.clone(), prediction, gt.clone())?);
    }
    Ok(RunReport {
        metrics: EvalReport::compute(&results, cfg)?,
        answered,
        no_response,
        errored,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "worker panicked".to_owned()
    }
}

struct Runner<'a> {
    store: &'a dyn FrameSource,
    scorer: &'a dyn FrameScorer,
    query_cfg: &'a QueryConfig,
}

impl Runner<'_> {
    fn attempt(&self, job: &[&VideoGroup]) -> std::result::Result<Vec<(QueryRecord, bool)>, String> {
        panic::catch_unwind(AssertUnwindSafe(|| {
            job.iter()
                .flat_map(|g| &g.queries)
                .map(|q| {
                    let (outcome, failed) = match run_query(self.store, q, self.scorer, self.query_cfg) {
                        Ok(QueryOutcome::Answered(a)) => (
                            Outcome::Answered {
                                confidence: a.prediction.confidence,
                                peak: a.peak,
                                track: a.prediction.track,
                            },
                            false,
                        ),
                        Ok(QueryOutcome::NoResponse) => (Outcome::NoResponse, false),
                        Err(e) => (Outcome::Error { message: e.to_string() }, true),
                    };
                    let record = QueryRecord {
                        query_id: q.query_id.clone(),
                        video_id: q.video_id.clone(),
                        outcome,
                    };
                    (record, failed)
                })
                .collect()
        }))
        .map_err(panic_message)
    }

    /// Runs a job, retrying it once if any query failed or the worker panicked.
    fn run(&self, job: &[&VideoGroup]) -> Vec<QueryRecord> {
        if let Ok(first) = self.attempt(job) {
            if first.iter().all(|(_, failed)| !failed) {
                return first.into_iter().map(|(r, _)| r).collect();
            }
        }
        log::warn!(
            "retrying group {:?}",
            job.iter().map(|g| g.video_id.as_str()).collect::<Vec<_>>()
        );
        match self.attempt(job) {
            Ok(second) => second.into_iter().map(|(r, _)| r).collect(),
            Err(message) => job
                .iter()
                .flat_map(|g| &g.queries)
                .map(|q| QueryRecord {
                    query_id: q.query_id.clone(),
                    video_id: q.video_id.clone(),
                    outcome: Outcome::Error {
                        message: format!("worker panicked: {message}"),
                    },
                })
                .collect(),
        }
    }
}

pub fn evaluate_parallel(
    workload: &Workload,
    store: &dyn FrameSource,
    scorer: &dyn FrameScorer,
    query_cfg: &QueryConfig,
    metric_cfg: &MetricConfig,
    cfg: &HarnessConfig,
) -> Result<Evaluation> {
    evaluate_parallel_with_progress(workload, store, scorer, query_cfg, metric_cfg, cfg, &Progress::new())
}

/// As [`evaluate_parallel`], reporting completed queries through `progress`.
pub fn evaluate_parallel_with_progress(
    workload: &Workload,
    store: &dyn FrameSource,
    scorer: &dyn FrameScorer,
    query_cfg: &QueryConfig,
    metric_cfg: &MetricConfig,
    cfg: &HarnessConfig,
    progress: &Progress,
) -> Result<Evaluation> {
    if workload.groups.is_empty() {
        return Err(Error::EmptyWorkload("the workload has no video groups"));
    }
    if cfg.workers < 1 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    if cfg.videos_per_group < 1 {
        return Err(Error::Config("groups must hold at least one video".into()));
    }
    query_cfg.tracker.validate()?;

    let mut order: Vec<&VideoGroup> = workload.groups.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.shuffle_seed));
    let jobs: Vec<&[&VideoGroup]> = order.chunks(cfg.videos_per_group).collect();
    progress.total.store(workload.num_queries(), Ordering::SeqCst);

    let runner = Runner {
        store,
        scorer,
        query_cfg,
    };
    let next = AtomicUsize::new(0);
    let collected = Mutex::new(Vec::with_capacity(workload.num_queries()));
    std::thread::scope(|s| {
        for _ in 0..cfg.workers.min(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let records = runner.run(job);
                let n = records.len();
                collected.lock().expect("collector lock").extend(records);
                progress.advance(n);
            });
        }
    });

    let mut records = collected.into_inner().expect("collector lock");
    records.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let report = evaluate_records(&records, &workload.ground_truth, metric_cfg)?;
    Ok(Evaluation { report, records })
}
