//! `vq2d`: command-line front end for the visual-query localization toolkit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use vq2d_core::harness::{evaluate_parallel, evaluate_records, HarnessConfig};
use vq2d_core::io::annotations::{load_annotations, read_annotations};
use vq2d_core::io::detections::DetectionsFile;
use vq2d_core::io::manifest::{load_proposals, save_manifest, BatchRecord};
use vq2d_core::io::predictions::{load_predictions, save_predictions};
use vq2d_core::io::report::{report_json, report_text, save_report};
use vq2d_core::metrics::{MetricConfig, DEFAULT_AP_THRESHOLD, DEFAULT_RECOVERY_IOU, DEFAULT_SUCCESS_THRESHOLD};
use vq2d_core::pipeline::{
    query_curve, DetectionsScorer, DirFrameStore, FrameScorer, NccParams, NccScorer, QueryConfig, SearchMargin,
    TemplateUpdate, TrackerConfig,
};
use vq2d_core::sampler::{balance_batch, classify_proposal, BatchSpec, GroundTruthContext, Label};
use vq2d_core::synth::{synth_generate, Scenarios, SynthConfig};

#[derive(Parser)]
#[command(
    name = "vq2d",
    version,
    about = "Visual-query 2D localization: inference, evaluation, sampling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (frames + annotations).
    Synth(SynthArgs),
    /// Run the detect / peak / track pipeline on every query.
    Infer(InferArgs),
    /// Score a predictions file against annotations.
    Evaluate(EvaluateArgs),
    /// Build balanced training batches from scored proposals.
    Sample(SampleArgs),
    /// Print a query's similarity curve as a table.
    Curve(CurveArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    videos: usize,
    #[arg(long, default_value_t = 60)]
    frames: u32,
    #[arg(long, default_value_t = 160)]
    width: u32,
    #[arg(long, default_value_t = 120)]
    height: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    texture_seed: u64,
    #[arg(long)]
    distractor_similar: bool,
    #[arg(long)]
    ambiguous_context: bool,
    #[arg(long)]
    blur_background: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerKind {
    Ncc,
    DetectionsFile,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UpdateKind {
    None,
    EveryFrame,
}

#[derive(Args)]
struct ScorerArgs {
    /// Annotation file.
    #[arg(long)]
    annotations: PathBuf,
    /// Frame store root (`<root>/<video>/<frame>.png`).
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Ncc)]
    scorer: ScorerKind,
    /// Detections file, required with `--scorer detections-file`.
    #[arg(long)]
    detections: Option<PathBuf>,
    /// NCC coarse search stride in pixels.
    #[arg(long, default_value_t = 4)]
    ncc_stride: u32,
    /// NCC template scales, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.75, 1.0, 1.33])]
    scales: Vec<f64>,
}

impl ScorerArgs {
    fn build(&self) -> Result<Box<dyn FrameScorer>> {
        Ok(match self.scorer {
            ScorerKind::Ncc => Box::new(NccScorer::new(NccParams {
                scales: self.scales.clone(),
                stride: self.ncc_stride,
            })),
            ScorerKind::DetectionsFile => {
                let path = self
                    .detections
                    .as_ref()
                    .context("--scorer detections-file needs --detections")?;
                let dets = DetectionsFile::load(path)?;
                Box::new(DetectionsScorer::new(Arc::new(dets)))
            }
        })
    }
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, env = "VQ2D_WORKERS")]
    workers: Option<usize>,
    /// Per-query results file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the evaluation report (JSON) here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = vq2d_core::pipeline::tracker::DEFAULT_STOP_THRESHOLD)]
    stop_threshold: f64,
    /// Tracker search margin in pixels; half the box diagonal when omitted.
    #[arg(long)]
    search_margin: Option<f64>,
    #[arg(long, value_enum, default_value_t = UpdateKind::None)]
    template_update: UpdateKind,
    /// Peaks below this score give no response. Defaults to the stop
    /// threshold for the NCC scorer and to none for replayed detections.
    #[arg(long)]
    min_peak_score: Option<f64>,
    /// Answer every query that has a proposal, whatever its score.
    #[arg(long, conflicts_with = "min_peak_score")]
    answer_all: bool,
    #[arg(long, default_value_t = 0)]
    shuffle_seed: u64,
    #[arg(long, default_value_t = 1)]
    videos_per_group: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Text,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = DEFAULT_AP_THRESHOLD)]
    st_thresh: f64,
    #[arg(long, default_value_t = DEFAULT_AP_THRESHOLD)]
    t_thresh: f64,
    #[arg(long, default_value_t = DEFAULT_SUCCESS_THRESHOLD)]
    succ_thresh: f64,
    #[arg(long, default_value_t = DEFAULT_RECOVERY_IOU)]
    recovery_iou: f64,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Proposal file (one scored proposal per line, tagged with its query).
    #[arg(long)]
    proposals: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// Batch manifest to write.
    #[arg(long)]
    out: PathBuf,
    /// Positive:negative ratio.
    #[arg(long, default_value = "1:64", value_parser = parse_ratio)]
    ratio: (u32, u32),
    /// Negatives picked by loss before random filling; defaults to the
    /// whole negative budget.
    #[arg(long)]
    mining_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    query_id: String,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let (p, n) = s
        .split_once(':')
        .ok_or_else(|| format!("expected POS:NEG, got {s:?}"))?;
    let p: u32 = p.trim().parse().map_err(|e| format!("bad positive count: {e}"))?;
    let n: u32 = n.trim().parse().map_err(|e| format!("bad negative count: {e}"))?;
    if p == 0 || n == 0 {
        return Err("both sides of the ratio must be at least 1".into());
    }
    Ok((p, n))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        num_videos: a.videos,
        frames_per_video: a.frames,
        width: a.width,
        height: a.height,
        texture_seed: a.texture_seed,
        rng_seed: a.seed,
        target_size: None,
        scenarios: Scenarios {
            distractor_similar: a.distractor_similar,
            ambiguous_context: a.ambiguous_context,
            blur_background: a.blur_background,
        },
    };
    let (paths, anns, _) = synth_generate(&cfg, &a.out)?;
    println!(
        "wrote {} videos to {} (annotations: {})",
        anns.len(),
        paths.frames.display(),
        paths.annotations.display()
    );
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let workload = load_annotations(&a.scorer.annotations)?;
    let scorer = a.scorer.build()?;
    let store = DirFrameStore::new(&a.scorer.frames);
    let tracker = TrackerConfig {
        stop_threshold: a.stop_threshold,
        search_margin: a.search_margin.map_or(SearchMargin::HalfDiagonal, SearchMargin::Pixels),
        template_update: match a.template_update {
            UpdateKind::None => TemplateUpdate::None,
            UpdateKind::EveryFrame => TemplateUpdate::EveryFrame,
        },
    };
    let min_peak_score = match (a.answer_all, a.min_peak_score, a.scorer.scorer) {
        (true, _, _) => None,
        (false, Some(m), _) => Some(m),
        (false, None, ScorerKind::Ncc) => Some(a.stop_threshold),
        (false, None, ScorerKind::DetectionsFile) => None,
    };
    let query_cfg = QueryConfig {
        tracker,
        min_peak_score,
    };
    let mut harness = HarnessConfig {
        shuffle_seed: a.shuffle_seed,
        videos_per_group: a.videos_per_group,
        ..HarnessConfig::default()
    };
    if let Some(w) = a.workers {
        harness.workers = w;
    }
    log::info!(
        "evaluating {} queries on {} workers",
        workload.num_queries(),
        harness.workers
    );
    let eval = evaluate_parallel(
        &workload,
        &store,
        scorer.as_ref(),
        &query_cfg,
        &MetricConfig::default(),
        &harness,
    )?;
    save_predictions(&a.out, &eval.records)?;
    if let Some(r) = &a.report {
        save_report(r, &eval.report)?;
    }
    print!("{}", report_text(&eval.report));
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let anns = read_annotations(&a.annotations)?;
    let gt: BTreeMap<_, _> = anns.into_iter().map(|x| (x.query.query_id, x.ground_truth)).collect();
    let records = load_predictions(&a.predictions)?;
    let cfg = MetricConfig {
        st_threshold: a.st_thresh,
        t_threshold: a.t_thresh,
        success_threshold: a.succ_thresh,
        recovery_iou: a.recovery_iou,
    };
    let report = evaluate_records(&records, &gt, &cfg)?;
    let text = match a.report {
        ReportFormat::Json => report_json(&report),
        ReportFormat::Text => report_text(&report),
    };
    emit(a.out.as_deref(), &text)
}

fn sample(a: SampleArgs) -> Result<()> {
    let anns = read_annotations(&a.annotations)?;
    let contexts: BTreeMap<String, GroundTruthContext> = anns
        .into_iter()
        .map(|x| (x.query.query_id, GroundTruthContext::new(x.ground_truth)))
        .collect();
    let proposals = load_proposals(&a.proposals)?;
    let mut by_query: BTreeMap<&str, (Vec<_>, Vec<_>)> = BTreeMap::new();
    for r in &proposals {
        let ctx = contexts
            .get(&r.query_id)
            .with_context(|| format!("proposal refers to unknown query {:?}", r.query_id))?;
        let p = r.proposal()?;
        let entry = by_query.entry(&r.query_id).or_default();
        match classify_proposal(&p, ctx) {
            Label::Positive => entry.0.push(p),
            Label::Negative => entry.1.push(p),
        }
    }

    let mut batches = Vec::new();
    for (i, (query_id, (pos, neg))) in by_query.into_iter().enumerate() {
        if pos.is_empty() {
            log::warn!("query {query_id:?} has no positive proposal; skipped");
            continue;
        }
        let (rp, rn) = a.ratio;
        let target = pos.len() * rn as usize / rp as usize;
        let spec = BatchSpec::new(rp, rn, a.mining_k.unwrap_or(target).max(1))?;
        let seed = a.seed.wrapping_add(i as u64);
        let batch = balance_batch(pos, &neg, &spec, seed)?;
        println!(
            "{query_id}: {} positives, {} negatives{}",
            batch.positives.len(),
            batch.negatives.len(),
            if batch.under_filled { " (under-filled)" } else { "" }
        );
        batches.push(BatchRecord {
            batch_id: query_id.to_owned(),
            seed,
            batch,
        });
    }
    if batches.is_empty() {
        bail!("no query has a positive proposal; nothing to sample");
    }
    save_manifest(&a.out, &batches)?;
    Ok(())
}

fn curve(a: CurveArgs) -> Result<()> {
    let workload = load_annotations(&a.scorer.annotations)?;
    let query = workload
        .query(&a.query_id)
        .with_context(|| format!("no query {:?} in {}", a.query_id, a.scorer.annotations.display()))?;
    let scorer = a.scorer.build()?;
    let store = DirFrameStore::new(&a.scorer.frames);
    let curve = query_curve(&store, query, scorer.as_ref())?;
    let mut text = String::from("frame\tscore\tx\ty\tw\th\n");
    for (f, p) in curve.iter() {
        match p.bbox {
            Some(b) => text.push_str(&format!(
                "{f}\t{}\t{}\t{}\t{}\t{}\n",
                p.score,
                b.x(),
                b.y(),
                b.w(),
                b.h()
            )),
            None => text.push_str(&format!("{f}\t{}\t\t\t\t\n", p.score)),
        }
    }
    emit(a.out.as_deref(), &text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Infer(a) => infer(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sample(a) => sample(a),
        Command::Curve(a) => curve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
