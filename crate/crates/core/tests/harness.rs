mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use common::*;
use image::GrayImage;
use vq2d_core::harness::{evaluate_parallel_with_progress, Progress, VideoGroup};
use vq2d_core::io::predictions::{encode_predictions, Outcome};
use vq2d_core::io::report::report_json;
use vq2d_core::pipeline::{CropScorer, FrameScorer, FrameSource, MemoryFrameStore, NccScorer};
use vq2d_core::{evaluate_parallel, Error, FrameIndex, HarnessConfig, MetricConfig, QueryConfig, Result, Workload};

/// Eight videos, each with its own object visible over a different span.
fn fixture() -> (MemoryFrameStore, Workload) {
    let mut store = MemoryFrameStore::new();
    let mut groups = Vec::new();
    let mut gt = BTreeMap::new();
    for i in 0..8u32 {
        let vid = format!("v{i}");
        let obj = texture(100 + i as u64, OBJ, OBJ);
        let (s, e) = (2 + i % 3, 6 + i % 4);
        let (x, y) = (4 * (i % 5) + 4, 4 * (i % 3) + 4);
        store.insert_video(
            vid.clone(),
            video(12, i as u64 * 31, &obj, |f| (s..=e).contains(&f).then_some((x, y))),
        );
        let (crop_frames, crop_box) = crop_video(&obj, i as u64);
        store.insert_video(format!("{vid}_crop"), crop_frames);
        let qid = format!("q{i}");
        gt.insert(qid.clone(), static_track(&vid, s, e, bbox(x, y, OBJ, OBJ)));
        groups.push(VideoGroup {
            video_id: vid.clone(),
            queries: vec![query(&qid, &vid, 11, crop_box)],
        });
    }
    (store, Workload::new(groups, gt).unwrap())
}

fn cfg(workers: usize) -> HarnessConfig {
    HarnessConfig {
        workers,
        shuffle_seed: 9,
        videos_per_group: 1,
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (store, workload) = fixture();
    let run = |workers, per_group| {
        let c = HarnessConfig {
            videos_per_group: per_group,
            ..cfg(workers)
        };
        evaluate_parallel(
            &workload,
            &store,
            &NccScorer::default(),
            &QueryConfig::default(),
            &MetricConfig::default(),
            &c,
        )
        .unwrap()
    };
    let base = run(1, 1);
    assert_eq!(base.report.metrics.st_ap_25, 1.0);
    assert_eq!(base.report.answered, 8);
    let ids: Vec<&str> = base.records.iter().map(|r| r.query_id.as_str()).collect();
    assert_eq!(ids, ["q0", "q1", "q2", "q3", "q4", "q5", "q6", "q7"]);
    for (workers, per_group) in [(2, 1), (8, 1), (3, 3), (16, 2)] {
        let other = run(workers, per_group);
        assert_eq!(report_json(&other.report), report_json(&base.report));
        assert_eq!(
            encode_predictions(&other.records).unwrap(),
            encode_predictions(&base.records).unwrap()
        );
    }
}

#[test]
fn empty_workload_is_an_error() {
    let store = MemoryFrameStore::new();
    let workload = Workload::new(vec![], BTreeMap::new()).unwrap();
    let r = evaluate_parallel(
        &workload,
        &store,
        &NccScorer::default(),
        &QueryConfig::default(),
        &MetricConfig::default(),
        &cfg(2),
    );
    assert!(matches!(r, Err(Error::EmptyWorkload(_))));
}

#[test]
fn zero_workers_is_a_config_error() {
    let (store, workload) = fixture();
    let r = evaluate_parallel(
        &workload,
        &store,
        &NccScorer::default(),
        &QueryConfig::default(),
        &MetricConfig::default(),
        &cfg(0),
    );
    assert!(matches!(r, Err(Error::Config(_))));
}

/// NCC scoring that panics on one video and fails once on another.
struct Faulty {
    inner: NccScorer,
    flaked: AtomicBool,
}

impl FrameScorer for Faulty {
    fn prepare<'a>(
        &'a self,
        crop: &GrayImage,
        video_id: &str,
        store: &dyn FrameSource,
    ) -> Result<Box<dyn CropScorer + 'a>> {
        match video_id {
            "v3" => panic!("scorer blew up"),
            "v5" if !self.flaked.swap(true, Ordering::SeqCst) => Err(Error::FrameFetch {
                video_id: video_id.into(),
                frame: FrameIndex(0),
                reason: "transient".into(),
            }),
            _ => self.inner.prepare(crop, video_id, store),
        }
    }
}

#[test]
fn failures_stay_inside_their_group() {
    let (store, workload) = fixture();
    let scorer = Faulty {
        inner: NccScorer::default(),
        flaked: AtomicBool::new(false),
    };
    let prev_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let eval = evaluate_parallel(
        &workload,
        &store,
        &scorer,
        &QueryConfig::default(),
        &MetricConfig::default(),
        &cfg(3),
    );
    std::panic::set_hook(prev_hook);
    let eval = eval.unwrap();
    assert_eq!(eval.report.errored, 1);
    assert_eq!(eval.report.answered, 7);
    let q3 = eval.records.iter().find(|r| r.query_id == "q3").unwrap();
    match &q3.outcome {
        Outcome::Error { message } => assert!(message.contains("scorer blew up"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
    // the transient failure on v5 was retried away
    assert!(eval
        .records
        .iter()
        .find(|r| r.query_id == "q5")
        .unwrap()
        .prediction()
        .unwrap()
        .is_some());
}

#[test]
fn progress_reaches_the_total() {
    let (store, workload) = fixture();
    let progress = Arc::new(Progress::new());
    let watcher = {
        let progress = Arc::clone(&progress);
        std::thread::spawn(move || {
            let mut seen = vec![];
            for _ in 0..2000 {
                seen.push(progress.completed());
                if progress.total() > 0 && progress.completed() == progress.total() {
                    break;
                }
                std::thread::yield_now();
            }
            seen
        })
    };
    evaluate_parallel_with_progress(
        &workload,
        &store,
        &NccScorer::default(),
        &QueryConfig::default(),
        &MetricConfig::default(),
        &cfg(4),
        &progress,
    )
    .unwrap();
    let seen = watcher.join().unwrap();
    assert!(seen.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(progress.completed(), 8);
    assert_eq!(progress.total(), 8);
}

#[test]
fn workload_rejects_inconsistent_groups() {
    let (_, workload) = fixture();
    let gt = workload.ground_truth().clone();
    let mut groups = workload.groups().to_vec();
    groups[1].video_id = "v0".into();
    assert!(Workload::new(groups, gt.clone()).is_err());
    let mut groups = workload.groups().to_vec();
    let dup = groups[0].queries[0].clone();
    groups[1].queries.push(dup);
    assert!(Workload::new(groups, gt).is_err());
}
