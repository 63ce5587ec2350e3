//! Error type shared by every module of the crate.

use std::path::PathBuf;

use crate::geometry::FrameIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid box ({x}, {y}, {w}, {h}): {reason}")]
    InvalidBox {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        reason: &'static str,
    },

    #[error("invalid frame span [{start}, {end}]")]
    InvalidSpan { start: u32, end: u32 },

    #[error("invalid track: {0}")]
    InvalidTrack(String),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("tracks belong to different videos: {left:?} vs {right:?}")]
    VideoMismatch { left: String, right: String },

    #[error("metric is undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("duplicate query id {0:?}")]
    DuplicateQuery(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("template {template_w}x{template_h} does not fit frame {frame_w}x{frame_h} at any scale")]
    TemplateTooLarge {
        template_w: u32,
        template_h: u32,
        frame_w: u32,
        frame_h: u32,
    },

    #[error("failed to fetch frame {frame} of video {video_id:?}: {reason}")]
    FrameFetch {
        video_id: String,
        frame: FrameIndex,
        reason: String,
    },

    #[error("no frame in the searched range produced a proposal")]
    NoProposal,

    #[error("negative proposal #{index} carries no loss value")]
    MissingLoss { index: usize },

    #[error("a batch needs at least one positive proposal")]
    NoPositives,

    #[error("nothing to evaluate: {0}")]
    EmptyWorkload(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: unsupported file {found:?}, expected {expected:?}")]
    Schema {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("query {query_id:?}: field `{field}`: {message}")]
    Record {
        query_id: String,
        field: &'static str,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
