//! Small planted-object videos for pipeline and harness tests.
#![allow(dead_code)]

use image::{GrayImage, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vq2d_core::{BBox, FrameIndex, ResponseTrack, VisualQuery};

pub const W: u32 = 64;
pub const H: u32 = 48;
pub const OBJ: u32 = 16;

/// Blocky random texture with 4-pixel cells.
pub fn texture(seed: u64, w: u32, h: u32) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<u8> = (0..(w / 4 + 1) * (h / 4 + 1)).map(|_| rng.random()).collect();
    GrayImage::from_fn(w, h, |x, y| Luma([cells[((y / 4) * (w / 4 + 1) + x / 4) as usize]]))
}

/// Per-pixel noise, which correlates poorly with any blocky texture.
pub fn background(seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    GrayImage::from_fn(W, H, |_, _| Luma([rng.random_range(96..160)]))
}

pub fn paste(frame: &mut GrayImage, obj: &GrayImage, x: u32, y: u32) {
    image::imageops::replace(frame, obj, x as i64, y as i64);
}

pub fn bbox(x: u32, y: u32, w: u32, h: u32) -> BBox {
    BBox::new(x as f64, y as f64, w as f64, h as f64).unwrap()
}

/// `n` frames with `obj` drawn wherever `at` says.
pub fn video(n: u32, seed: u64, obj: &GrayImage, at: impl Fn(u32) -> Option<(u32, u32)>) -> Vec<GrayImage> {
    (0..n)
        .map(|f| {
            let mut img = background(seed.wrapping_add(f as u64));
            if let Some((x, y)) = at(f) {
                paste(&mut img, obj, x, y);
            }
            img
        })
        .collect()
}

/// One-frame crop video with the object at (24, 16).
pub fn crop_video(obj: &GrayImage, seed: u64) -> (Vec<GrayImage>, BBox) {
    let mut img = background(seed.wrapping_add(1000));
    paste(&mut img, obj, 24, 16);
    (vec![img], bbox(24, 16, obj.width(), obj.height()))
}

pub fn query(id: &str, video: &str, q: u32, crop_box: BBox) -> VisualQuery {
    VisualQuery::new(
        id,
        video,
        FrameIndex(q),
        format!("{video}_crop"),
        FrameIndex(0),
        crop_box,
    )
    .unwrap()
}

pub fn static_track(video: &str, start: u32, end: u32, b: BBox) -> ResponseTrack {
    ResponseTrack::new(video, FrameIndex(start), vec![b; (end - start + 1) as usize]).unwrap()
}
