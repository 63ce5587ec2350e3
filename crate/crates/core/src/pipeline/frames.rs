//! Frame stores: where the pipeline reads video frames from.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::GrayImage;

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameIndex};

/// Read access to decoded frames, already converted to 8-bit luma.
///
/// Implementations are shared by concurrent evaluation workers.
pub trait FrameSource: Send + Sync {
    fn num_frames(&self, video_id: &str) -> Result<u32>;

    fn frame(&self, video_id: &str, frame: FrameIndex) -> Result<Arc<GrayImage>>;
}

/// File name of a frame inside its video directory.
pub fn frame_file_name(frame: FrameIndex) -> String {
    format!("{:06}.png", frame.0)
}

/// Frames stored as `<root>/<video_id>/<frame:06>.png`.
#[derive(Debug, Clone)]
pub struct DirFrameStore {
    root: PathBuf,
}

impl DirFrameStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirFrameStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn video_dir(&self, video_id: &str) -> PathBuf {
        self.root.join(video_id)
    }

    pub fn frame_path(&self, video_id: &str, frame: FrameIndex) -> PathBuf {
        self.video_dir(video_id).join(frame_file_name(frame))
    }
}

impl FrameSource for DirFrameStore {
    fn num_frames(&self, video_id: &str) -> Result<u32> {
        let dir = self.video_dir(video_id);
        let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut n = 0u32;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            if entry.path().extension().is_some_and(|e| e == "png") {
                n += 1;
            }
        }
        Ok(n)
    }

    fn frame(&self, video_id: &str, frame: FrameIndex) -> Result<Arc<GrayImage>> {
        let path = self.frame_path(video_id, frame);
        let img = image::open(&path).map_err(|e| Error::FrameFetch {
            video_id: video_id.to_owned(),
            frame,
            reason: format!("{}: {e}", path.display()),
        })?;
        Ok(Arc::new(img.into_luma8()))
    }
}

/// In-memory store, mostly for tests and benchmarks.
#[derive(Debug, Clone, Default)]
pub struct MemoryFrameStore {
    videos: HashMap<String, Vec<Arc<GrayImage>>>,
}

impl MemoryFrameStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_video(&mut self, video_id: impl Into<String>, frames: Vec<GrayImage>) {
        self.videos
            .insert(video_id.into(), frames.into_iter().map(Arc::new).collect());
    }
}

impl FrameSource for MemoryFrameStore {
    fn num_frames(&self, video_id: &str) -> Result<u32> {
        self.videos
            .get(video_id)
            .map(|v| v.len() as u32)
            .ok_or_else(|| Error::FrameFetch {
                video_id: video_id.to_owned(),
                frame: FrameIndex(0),
                reason: "unknown video".into(),
            })
    }

    fn frame(&self, video_id: &str, frame: FrameIndex) -> Result<Arc<GrayImage>> {
        self.videos
            .get(video_id)
            .and_then(|v| v.get(frame.0 as usize))
            .cloned()
            .ok_or_else(|| Error::FrameFetch {
                video_id: video_id.to_owned(),
                frame,
                reason: "no such frame".into(),
            })
    }
}

/// Integer pixel rectangle covered by `b` after rounding and clamping to the
/// image, as `(x, y, w, h)`.
pub(crate) fn pixel_rect(b: &BBox, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = b.x().round().clamp(0.0, width as f64) as u32;
    let y0 = b.y().round().clamp(0.0, height as f64) as u32;
    let x1 = b.right().round().clamp(0.0, width as f64) as u32;
    let y1 = b.bottom().round().clamp(0.0, height as f64) as u32;
    (x1 > x0 && y1 > y0).then(|| (x0, y0, x1 - x0, y1 - y0))
}

/// Copies the pixels under `b` out of `img`.
pub fn crop_image(img: &GrayImage, b: &BBox) -> Result<GrayImage> {
    let (x, y, w, h) = pixel_rect(b, img.width(), img.height()).ok_or_else(|| {
        Error::InvalidInput(format!(
            "box ({}, {}, {}, {}) lies outside the {}x{} image",
            b.x(),
            b.y(),
            b.w(),
            b.h(),
            img.width(),
            img.height()
        ))
    })?;
    Ok(image::imageops::crop_imm(img, x, y, w, h).to_image())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_store_reads_back_frames() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirFrameStore::new(dir.path());
        std::fs::create_dir_all(store.video_dir("v")).unwrap();
        for i in 0..3u8 {
            let img = GrayImage::from_pixel(8, 6, image::Luma([i * 10]));
            img.save(store.frame_path("v", FrameIndex(i as u32))).unwrap();
        }
        assert_eq!(store.num_frames("v").unwrap(), 3);
        assert_eq!(store.frame("v", FrameIndex(2)).unwrap().get_pixel(0, 0).0, [20]);
        let err = store.frame("v", FrameIndex(9)).unwrap_err();
        assert!(matches!(
            err,
            Error::FrameFetch {
                frame: FrameIndex(9),
                ..
            }
        ));
        assert!(store.num_frames("missing").is_err());
    }

    #[test]
    fn crop_rounds_and_clamps() {
        let img = GrayImage::from_fn(10, 10, |x, y| image::Luma([(x + 10 * y) as u8]));
        let c = crop_image(&img, &BBox::new(7.4, 8.0, 5.0, 5.0).unwrap()).unwrap();
        assert_eq!(c.dimensions(), (3, 2));
        assert_eq!(c.get_pixel(0, 0).0, [87]);
        assert!(crop_image(&img, &BBox::new(20.0, 0.0, 2.0, 2.0).unwrap()).is_err());
    }
}
