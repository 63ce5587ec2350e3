use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;
use vq2d_core::io::annotations::read_annotations;
use vq2d_core::io::manifest::{load_manifest, save_proposals, ProposalRecord};
use vq2d_core::io::predictions::{save_predictions, Outcome, QueryRecord};
use vq2d_core::io::report::load_report;
use vq2d_core::pipeline::Peak;
use vq2d_core::{BBox, FrameIndex};

fn vq2d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vq2d"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(root: &Path, videos: &str) {
    let out = vq2d(&[
        "synth",
        "--out",
        arg(root),
        "--videos",
        videos,
        "--frames",
        "40",
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn assert_one_line_failure(out: &Output) {
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err:?}");
    assert!(out.stdout.is_empty());
}

#[test]
fn evaluate_perfect_predictions() {
    let dir = tempdir().unwrap();
    synth(dir.path(), "3");
    let ann = dir.path().join("annotations.jsonl");
    let records: Vec<QueryRecord> = read_annotations(&ann)
        .unwrap()
        .into_iter()
        .map(|a| {
            let gt = a.ground_truth;
            QueryRecord {
                query_id: a.query.query_id,
                video_id: a.query.video_id,
                outcome: Outcome::Answered {
                    confidence: 0.5,
                    peak: Peak {
                        frame: gt.start(),
                        bbox: gt.boxes()[0],
                        score: 0.5,
                    },
                    track: gt,
                },
            }
        })
        .collect();
    let pred = dir.path().join("pred.jsonl");
    save_predictions(&pred, &records).unwrap();
    let report = dir.path().join("report.json");
    let out = vq2d(&[
        "evaluate",
        "--predictions",
        arg(&pred),
        "--annotations",
        arg(&ann),
        "--report",
        "json",
        "--out",
        arg(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = load_report(&report).unwrap();
    assert_eq!(r.metrics.st_ap_25, 1.0);
    assert_eq!(r.metrics.t_ap_25, 1.0);
    assert_eq!(r.metrics.success_rate, 100.0);
    assert_eq!(r.metrics.recovery, 100.0);
}

#[test]
fn infer_then_evaluate_agree() {
    let dir = tempdir().unwrap();
    synth(dir.path(), "6");
    let ann = dir.path().join("annotations.jsonl");
    let pred = dir.path().join("pred.jsonl");
    let report = dir.path().join("report.json");
    let out = vq2d(&[
        "infer",
        "--annotations",
        arg(&ann),
        "--frames",
        arg(&dir.path().join("frames")),
        "--workers",
        "2",
        "--out",
        arg(&pred),
        "--report",
        arg(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let inferred = load_report(&report).unwrap();
    assert!(inferred.metrics.st_ap_25 >= 0.9, "{inferred:?}");

    let again = dir.path().join("again.json");
    let out = vq2d(&[
        "evaluate",
        "--predictions",
        arg(&pred),
        "--annotations",
        arg(&ann),
        "--report",
        "json",
        "--out",
        arg(&again),
    ]);
    assert!(out.status.success());
    assert_eq!(load_report(&again).unwrap(), inferred);
}

#[test]
fn sample_one_to_64() {
    let dir = tempdir().unwrap();
    synth(dir.path(), "1");
    let ann = dir.path().join("annotations.jsonl");
    let a = &read_annotations(&ann).unwrap()[0];
    let gt = &a.ground_truth;
    let rec = |frame: FrameIndex, bbox: BBox, loss: f64| ProposalRecord {
        query_id: a.query.query_id.clone(),
        video_id: a.query.video_id.clone(),
        frame,
        bbox,
        loss: Some(loss),
    };
    let mut props = vec![rec(gt.start(), gt.boxes()[0], 0.0)];
    // far from the object inside the span, so every one is a negative
    let far = BBox::new(-500.0, -500.0, 5.0, 5.0).unwrap();
    props.extend((0..200).map(|i| rec(gt.start(), far, i as f64)));
    let proposals = dir.path().join("props.jsonl");
    save_proposals(&proposals, &props).unwrap();

    let manifest = dir.path().join("batches.jsonl");
    let out = vq2d(&[
        "sample",
        "--proposals",
        arg(&proposals),
        "--annotations",
        arg(&ann),
        "--out",
        arg(&manifest),
        "--ratio",
        "1:64",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let batches = load_manifest(&manifest).unwrap();
    assert_eq!(batches.len(), 1);
    assert_eq!(batches[0].batch.positives.len(), 1);
    assert_eq!(batches[0].batch.negatives.len(), 64);
    assert!(!batches[0].batch.under_filled);
}

#[test]
fn unknown_flag_fails_with_one_line() {
    let out = vq2d(&["evaluate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_one_line_failure(&out);
}

#[test]
fn missing_file_fails_with_one_line() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.jsonl");
    let out = vq2d(&[
        "evaluate",
        "--predictions",
        arg(&missing),
        "--annotations",
        arg(&missing),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_one_line_failure(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
}

#[test]
fn bad_ratio_is_rejected() {
    let out = vq2d(&[
        "sample",
        "--proposals",
        "a",
        "--annotations",
        "b",
        "--out",
        "c",
        "--ratio",
        "1-64",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_one_line_failure(&out);
}
