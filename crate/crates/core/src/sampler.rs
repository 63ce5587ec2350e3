//! Training-batch construction from detector proposals.
//!
//! A proposal is negative when it lies in the query's video inside the
//! ground-truth span but overlaps the ground-truth box with IoU below 0.5,
//! when it lies in the query's video outside the span, or when it comes
//! from another video. Negatives are then mined by loss and balanced
//! against the positives (64 negatives per positive by default).

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{box_iou, BBox, FrameIndex, ResponseTrack};

/// IoU below which an in-span proposal is a negative.
pub const POSITIVE_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub video_id: String,
    pub frame: FrameIndex,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl Proposal {
    pub fn new(video_id: impl Into<String>, frame: FrameIndex, bbox: BBox, loss: Option<f64>) -> Result<Self> {
        if let Some(l) = loss {
            if !l.is_finite() {
                return Err(Error::InvalidInput(format!("proposal loss {l} is not finite")));
            }
        }
        Ok(Proposal {
            video_id: video_id.into(),
            frame,
            bbox,
            loss,
        })
    }
}

/// Ground truth a proposal is judged against.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthContext {
    pub track: ResponseTrack,
}

impl GroundTruthContext {
    pub fn new(track: ResponseTrack) -> Self {
        GroundTruthContext { track }
    }

    pub fn video_id(&self) -> &str {
        self.track.video_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

/// Which negative condition a proposal meets, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeReason {
    /// Same video, inside the span, IoU below [`POSITIVE_IOU`].
    LowOverlap,
    /// Same video, outside the span.
    OutsideSpan,
    /// Drawn from another video.
    OtherVideo,
}

pub fn negative_reason(p: &Proposal, ctx: &GroundTruthContext) -> Option<NegativeReason> {
    if p.video_id != ctx.video_id() {
        return Some(NegativeReason::OtherVideo);
    }
    match ctx.track.box_at(p.frame) {
        None => Some(NegativeReason::OutsideSpan),
        Some(gt) if box_iou(&p.bbox, gt) < POSITIVE_IOU => Some(NegativeReason::LowOverlap),
        Some(_) => None,
    }
}

pub fn classify_proposal(p: &Proposal, ctx: &GroundTruthContext) -> Label {
    match negative_reason(p, ctx) {
        Some(_) => Label::Negative,
        None => Label::Positive,
    }
}

/// Indices of the `k` highest-loss proposals, highest first; equal losses
/// keep input order.
fn mine_indices(negatives: &[Proposal], k: usize) -> Result<Vec<usize>> {
    let losses = negatives
        .iter()
        .enumerate()
        .map(|(i, p)| p.loss.ok_or(Error::MissingLoss { index: i }))
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..negatives.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]));
    order.truncate(k);
    Ok(order)
}

/// The `k` proposals with the highest loss, in descending loss order.
pub fn mine_hard_negatives(negatives: &[Proposal], k: usize) -> Result<Vec<Proposal>> {
    Ok(mine_indices(negatives, k)?
        .into_iter()
        .map(|i| negatives[i].clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub ratio_pos: u32,
    pub ratio_neg: u32,
    /// How many negatives are picked by loss before random filling.
    pub mining_k: usize,
}

impl BatchSpec {
    pub fn new(ratio_pos: u32, ratio_neg: u32, mining_k: usize) -> Result<Self> {
        if ratio_pos < 1 || ratio_neg < 1 {
            return Err(Error::Config(format!(
                "ratio {ratio_pos}:{ratio_neg} needs both sides at least 1"
            )));
        }
        if mining_k < 1 {
            return Err(Error::Config("mining k must be at least 1".into()));
        }
        Ok(BatchSpec {
            ratio_pos,
            ratio_neg,
            mining_k,
        })
    }

    /// `1:64`, with `mining_k` negatives mined by loss.
    pub fn one_to_64(mining_k: usize) -> Result<Self> {
        Self::new(1, 64, mining_k)
    }

    pub fn target_negatives(&self, positives: usize) -> usize {
        positives * self.ratio_neg as usize / self.ratio_pos as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    Mined,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNegative {
    #[serde(flatten)]
    pub proposal: Proposal,
    pub source: NegativeSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub positives: Vec<Proposal>,
    pub negatives: Vec<BatchNegative>,
    /// Fewer negatives were available than the ratio asks for.
    pub under_filled: bool,
}

/// Keeps every positive and selects up to `target` negatives: the top
/// `min(mining_k, target)` by loss, then a seeded uniform draw without
/// replacement from the rest.
pub fn balance_batch(positives: Vec<Proposal>, negatives: &[Proposal], spec: &BatchSpec, seed: u64) -> Result<Batch> {
    if positives.is_empty() {
        return Err(Error::NoPositives);
    }
    let target = spec.target_negatives(positives.len());
    let k = spec.mining_k.min(target);
    let mined = mine_indices(negatives, k)?;

    let mut taken = vec![false; negatives.len()];
    for &i in &mined {
        taken[i] = true;
    }
    let rest: Vec<usize> = (0..negatives.len()).filter(|&i| !taken[i]).collect();
    let wanted = target - mined.len();
    let sampled: Vec<usize> = if rest.len() <= wanted {
        rest
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pick: Vec<usize> = index::sample(&mut rng, rest.len(), wanted)
            .into_iter()
            .map(|j| rest[j])
            .collect();
        pick.sort_unstable();
        pick
    };

    let under_filled = mined.len() + sampled.len() < target;
    let negatives = mined
        .into_iter()
        .map(|i| (i, NegativeSource::Mined))
        .chain(sampled.into_iter().map(|i| (i, NegativeSource::Sampled)))
        .map(|(i, source)| BatchNegative {
            proposal: negatives[i].clone(),
            source,
        })
        .collect();
    Ok(Batch {
        positives,
        negatives,
        under_filled,
    })
}
