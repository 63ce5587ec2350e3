//! Proposal lists (sampler input) and batch manifests (sampler output).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{BBox, FrameIndex};
use crate::sampler::{Batch, Proposal};

pub const PROPOSALS_FORMAT: &str = "vq2d.proposals";
pub const MANIFEST_FORMAT: &str = "vq2d.batch_manifest";

/// A detector proposal scored during training for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    /// Query whose ground truth labels this proposal.
    pub query_id: String,
    pub video_id: String,
    pub frame: FrameIndex,
    #[serde(rename = "box")]
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl ProposalRecord {
    pub fn proposal(&self) -> Result<Proposal> {
        Proposal::new(self.video_id.clone(), self.frame, self.bbox, self.loss)
    }
}

/// One balanced batch, keyed by the query it was built for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub batch_id: String,
    pub seed: u64,
    #[serde(flatten)]
    pub batch: Batch,
}

pub fn save_proposals(path: &Path, records: &[ProposalRecord]) -> Result<()> {
    super::write_records(path, PROPOSALS_FORMAT, records)
}

pub fn load_proposals(path: &Path) -> Result<Vec<ProposalRecord>> {
    let records: Vec<ProposalRecord> = super::read_records(path, PROPOSALS_FORMAT)?;
    for r in &records {
        r.proposal()?;
    }
    Ok(records)
}

pub fn save_manifest(path: &Path, batches: &[BatchRecord]) -> Result<()> {
    super::write_records(path, MANIFEST_FORMAT, batches)
}

pub fn load_manifest(path: &Path) -> Result<Vec<BatchRecord>> {
    super::read_records(path, MANIFEST_FORMAT)
}
