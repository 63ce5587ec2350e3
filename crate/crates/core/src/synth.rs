//! Synthetic visual-query videos with exact ground truth.
//!
//! Each video shows one uniquely textured target rectangle moving linearly
//! over a known contiguous span before the query frame, on a shaded, finely
//! cluttered background. The visual crop comes from a separate one-frame
//! "crop video" with its own background. Optional scenarios reproduce common false-peak
//! causes:
//!
//! * `distractor_similar`: a near-copy of the target texture appears between
//!   the end of the span and the query frame, while the true target is seen
//!   with sensor noise;
//! * `ambiguous_context`: a context object is attached to the target, is
//!   partly included in the crop, and stays in the scene when the target is
//!   gone;
//! * `blur_background`: every frame without the target is Gaussian-blurred.

use std::path::{Path, PathBuf};

use image::{imageops, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, FrameIndex, ResponseTrack, VisualQuery};
use crate::io::annotations::{save_annotations, Annotation};
use crate::pipeline::frames::frame_file_name;

pub const SCENES_FORMAT: &str = "vq2d.synth_scenes";

/// Target sizes are multiples of this.
const CELL: u32 = 4;
const TEXTURE_SPACING: u32 = 6;
const BACKGROUND_SPACING: u32 = 32;
const CLUTTER_CELL: u32 = 2;
const CLUTTER: i16 = 80;
const TARGET_NOISE_SIGMA: f64 = 6.0;
const BLUR_SIGMA: f32 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scenarios {
    pub distractor_similar: bool,
    pub ambiguous_context: bool,
    pub blur_background: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_videos: usize,
    pub frames_per_video: u32,
    pub width: u32,
    pub height: u32,
    /// Seeds the object textures.
    pub texture_seed: u64,
    /// Seeds layout, motion, timing and noise.
    pub rng_seed: u64,
    /// Fixed target size; drawn per video when `None`.
    pub target_size: Option<(u32, u32)>,
    pub scenarios: Scenarios,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_videos: 10,
            frames_per_video: 60,
            width: 160,
            height: 120,
            texture_seed: 0,
            rng_seed: 0,
            target_size: None,
            scenarios: Scenarios::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_videos < 1 {
            return Err(Error::Config("at least one video is required".into()));
        }
        if self.frames_per_video < 2 {
            return Err(Error::Config("videos need at least 2 frames".into()));
        }
        if self.width < 32 || self.height < 32 {
            return Err(Error::Config(format!(
                "frames must be at least 32x32, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn size_range(&self) -> (u32, u32) {
        let base = self.width.min(self.height);
        let lo = (base / 6).max(8) / CELL * CELL;
        let hi = ((base / 4).max(8) / CELL * CELL).max(lo);
        (lo, hi)
    }
}

/// Layout facts about one generated video, beyond its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub video_id: String,
    pub query_id: String,
    pub gt_start: u32,
    pub gt_end: u32,
    pub query_frame: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractor: Option<PlacedObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_size: Option<(u32, u32)>,
    pub blurred_frames: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub start: u32,
    pub end: u32,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

/// One rendered video, its crop frame and ground truth.
#[derive(Debug, Clone)]
pub struct SynthVideo {
    pub frames: Vec<RgbImage>,
    pub crop_frame: RgbImage,
    pub annotation: Annotation,
    pub scene: SceneRecord,
}

pub fn video_id(index: usize) -> String {
    format!("vid{index:04}")
}

pub fn crop_video_id(index: usize) -> String {
    format!("vid{index:04}_crop")
}

fn query_id(index: usize) -> String {
    format!("q{index:04}")
}

/// Bilinearly interpolated random colours on a grid with `spacing` pixels
/// between control points.
fn value_noise(rng: &mut ChaCha8Rng, w: u32, h: u32, spacing: u32, lo: u8, hi: u8) -> ControlGrid {
    let (gw, gh) = (w / spacing + 2, h / spacing + 2);
    let points = (0..gw * gh)
        .map(|_| std::array::from_fn(|_| rng.random_range(lo..=hi) as f32))
        .collect();
    ControlGrid { gw, spacing, points }
}

#[derive(Clone)]
struct ControlGrid {
    gw: u32,
    spacing: u32,
    points: Vec<[f32; 3]>,
}

impl ControlGrid {
    fn render(&self, w: u32, h: u32) -> RgbImage {
        let sp = self.spacing as f32;
        RgbImage::from_fn(w, h, |x, y| {
            let (gx, gy) = (x / self.spacing, y / self.spacing);
            let (fx, fy) = ((x % self.spacing) as f32 / sp, (y % self.spacing) as f32 / sp);
            let at = |i: u32, j: u32| self.points[(j * self.gw + i) as usize];
            let (a, b, c, d) = (at(gx, gy), at(gx + 1, gy), at(gx, gy + 1), at(gx + 1, gy + 1));
            Rgb(std::array::from_fn(|k| {
                let top = a[k] + (b[k] - a[k]) * fx;
                let bottom = c[k] + (d[k] - c[k]) * fx;
                (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8
            }))
        })
    }

    /// Same layout with every control colour jittered by up to `amount`.
    fn jittered(&self, rng: &mut ChaCha8Rng, amount: f32) -> ControlGrid {
        let points = self
            .points
            .iter()
            .map(|p| std::array::from_fn(|k| (p[k] + rng.random_range(-amount..=amount)).clamp(0.0, 255.0)))
            .collect();
        ControlGrid { points, ..self.clone() }
    }
}

/// Low-frequency shading plus fine clutter, which correlates poorly with
/// the smooth object textures.
fn background(rng: &mut ChaCha8Rng, w: u32, h: u32) -> RgbImage {
    let mut img = value_noise(rng, w, h, BACKGROUND_SPACING, 60, 200).render(w, h);
    let (cw, ch) = (w.div_ceil(CLUTTER_CELL), h.div_ceil(CLUTTER_CELL));
    let clutter: Vec<i16> = (0..cw * ch).map(|_| rng.random_range(-CLUTTER..=CLUTTER)).collect();
    for (x, y, p) in img.enumerate_pixels_mut() {
        let d = clutter[((y / CLUTTER_CELL) * cw + x / CLUTTER_CELL) as usize];
        for c in p.0.iter_mut() {
            *c = (*c as i16 + d).clamp(0, 255) as u8;
        }
    }
    img
}

fn add_noise(rng: &mut ChaCha8Rng, img: &mut RgbImage, sigma: f64) {
    let normal = Normal::new(0.0, sigma).expect("sigma is positive");
    for p in img.pixels_mut() {
        for c in p.0.iter_mut() {
            *c = (*c as f64 + normal.sample(rng)).round().clamp(0.0, 255.0) as u8;
        }
    }
}

fn paste(dst: &mut RgbImage, src: &RgbImage, x: u32, y: u32) {
    imageops::replace(dst, src, x as i64, y as i64);
}

fn pixel_box(x: u32, y: u32, w: u32, h: u32) -> BBox {
    BBox::new(x as f64, y as f64, w as f64, h as f64).expect("positive size")
}

/// Renders video `index` of a dataset.
pub fn render_video(cfg: &SynthConfig, index: usize) -> Result<SynthVideo> {
    cfg.validate()?;
    let (fw, fh) = (cfg.width, cfg.height);
    let n = cfg.frames_per_video;
    let sc = cfg.scenarios;

    let mut tex_rng = ChaCha8Rng::seed_from_u64(cfg.texture_seed);
    tex_rng.set_stream(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(index as u64);

    let (tw, th) = match cfg.target_size {
        Some(s) => s,
        None => {
            let (lo, hi) = cfg.size_range();
            let pick = |rng: &mut ChaCha8Rng| rng.random_range(lo / CELL..=hi / CELL) * CELL;
            (pick(&mut rng), pick(&mut rng))
        }
    };
    let context_w = if sc.ambiguous_context { (tw / 2).max(CELL) } else { 0 };
    let (path_w, path_h) = (tw + context_w, th);
    if tw == 0 || th == 0 || path_w > fw || path_h > fh {
        return Err(Error::Config(format!(
            "target {tw}x{th} (plus context {context_w}) does not fit a {fw}x{fh} frame"
        )));
    }
    let target_grid = value_noise(&mut tex_rng, tw, th, TEXTURE_SPACING, 0, 255);
    let target_tex = target_grid.render(tw, th);
    let context_tex = sc
        .ambiguous_context
        .then(|| value_noise(&mut tex_rng, context_w, th, TEXTURE_SPACING, 0, 255).render(context_w, th));

    // timing: s <= e < q <= n - 1
    let q = (n - 1 - rng.random_range(0..=n / 10)).max(1);
    let gap = rng.random_range(n / 10..=n / 4).min(q - 1);
    let e = q - 1 - gap;
    let max_len = (n / 3).clamp(1, e + 1);
    let len = rng.random_range(8.min(max_len)..=max_len);
    let s = e + 1 - len;

    // linear motion kept inside the frame
    let steps = (len - 1) as i64;
    let mut axis = |room: u32| -> (i64, i64) {
        let mut v: i64 = rng.random_range(-2..=2);
        if v.abs() * steps > room as i64 {
            v = 0;
        }
        let lo = (-v * steps).max(0);
        let hi = room as i64 - (v * steps).max(0);
        (rng.random_range(lo..=hi), v)
    };
    let (x0, vx) = axis(fw - path_w);
    let (y0, vy) = axis(fh - path_h);
    let pos = |f: u32| -> (u32, u32) {
        let k = (f.clamp(s, e) - s) as i64;
        ((x0 + vx * k) as u32, (y0 + vy * k) as u32)
    };

    let mut bg_rng = rng.clone();
    bg_rng.set_stream(u64::MAX - index as u64);
    let bg = background(&mut bg_rng, fw, fh);

    let distractor = if sc.distractor_similar {
        let jitter = rng.random_range(4.0..=40.0);
        let tex = target_grid.jittered(&mut tex_rng, jitter).render(tw, th);
        let (ds, de) = if gap > 0 {
            let ds = rng.random_range(e + 1..=q - 1);
            (ds, rng.random_range(ds..=q - 1))
        } else if s > 0 {
            (0, s - 1)
        } else {
            (q, q)
        };
        let path: Vec<BBox> = (s..=e)
            .map(|f| {
                let (x, y) = pos(f);
                pixel_box(x, y, path_w, path_h)
            })
            .collect();
        let mut spot = None;
        for _ in 0..100 {
            let x = rng.random_range(0..=fw - tw);
            let y = rng.random_range(0..=fh - th);
            let b = pixel_box(x, y, tw, th);
            if path.iter().all(|p| p.intersection_area(&b) == 0.0) {
                spot = Some((x, y));
                break;
            }
        }
        spot.filter(|_| ds < q).map(|(x, y)| (ds, de, x, y, tex))
    } else {
        None
    };

    let mut frames = Vec::with_capacity(n as usize);
    let mut gt_boxes = Vec::with_capacity(len as usize);
    let mut blurred = Vec::new();
    for f in 0..n {
        let mut img = bg.clone();
        let (x, y) = pos(f);
        if let Some(ctx) = &context_tex {
            paste(&mut img, ctx, x + tw, y);
        }
        if let Some((ds, de, dx, dy, tex)) = &distractor {
            if (*ds..=*de).contains(&f) {
                paste(&mut img, tex, *dx, *dy);
            }
        }
        let visible = (s..=e).contains(&f);
        if visible {
            let mut t = target_tex.clone();
            if sc.distractor_similar {
                add_noise(&mut rng, &mut t, TARGET_NOISE_SIGMA);
            }
            paste(&mut img, &t, x, y);
            gt_boxes.push(pixel_box(x, y, tw, th));
        } else if sc.blur_background {
            img = imageops::blur(&img, BLUR_SIGMA);
            blurred.push(f);
        }
        frames.push(img);
    }

    // crop: the target (and part of its context) on a different scene
    let crop_bg = background(&mut bg_rng, fw, fh);
    let mut crop_frame = crop_bg;
    let cx = rng.random_range(0..=fw - path_w);
    let cy = rng.random_range(0..=fh - path_h);
    paste(&mut crop_frame, &target_tex, cx, cy);
    if let Some(ctx) = &context_tex {
        paste(&mut crop_frame, ctx, cx + tw, cy);
    }
    let crop_box = pixel_box(cx, cy, tw + context_w / 2, th);

    let vid = video_id(index);
    let qid = query_id(index);
    let query = VisualQuery::new(
        qid.clone(),
        vid.clone(),
        FrameIndex(q),
        crop_video_id(index),
        FrameIndex(0),
        crop_box,
    )?;
    let ground_truth = ResponseTrack::new(vid.clone(), FrameIndex(s), gt_boxes)?;
    let scene = SceneRecord {
        video_id: vid,
        query_id: qid,
        gt_start: s,
        gt_end: e,
        query_frame: q,
        distractor: distractor.map(|(ds, de, x, y, _)| PlacedObject {
            start: ds,
            end: de,
            bbox: pixel_box(x, y, tw, th),
        }),
        context_size: sc.ambiguous_context.then_some((context_w, th)),
        blurred_frames: blurred,
    };
    Ok(SynthVideo {
        frames,
        crop_frame,
        annotation: Annotation { query, ground_truth },
        scene,
    })
}

/// Paths of a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPaths {
    pub frames: PathBuf,
    pub annotations: PathBuf,
    pub scenes: PathBuf,
}

impl DatasetPaths {
    pub fn new(root: &Path) -> Self {
        DatasetPaths {
            frames: root.join("frames"),
            annotations: root.join("annotations.jsonl"),
            scenes: root.join("scenes.jsonl"),
        }
    }
}

fn save_frame(img: &RgbImage, dir: &Path, frame: u32) -> Result<()> {
    img.save(dir.join(frame_file_name(FrameIndex(frame))))?;
    Ok(())
}

/// Writes a full dataset under `root`: `frames/<video>/<frame>.png`,
/// `annotations.jsonl` and `scenes.jsonl`.
pub fn synth_generate(cfg: &SynthConfig, root: &Path) -> Result<(DatasetPaths, Vec<Annotation>, Vec<SceneRecord>)> {
    cfg.validate()?;
    let paths = DatasetPaths::new(root);
    let mut annotations = Vec::with_capacity(cfg.num_videos);
    let mut scenes = Vec::with_capacity(cfg.num_videos);
    for i in 0..cfg.num_videos {
        let v = render_video(cfg, i)?;
        let dir = paths.frames.join(video_id(i));
        let crop_dir = paths.frames.join(crop_video_id(i));
        for d in [&dir, &crop_dir] {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        for (f, img) in v.frames.iter().enumerate() {
            save_frame(img, &dir, f as u32)?;
        }
        save_frame(&v.crop_frame, &crop_dir, 0)?;
        annotations.push(v.annotation);
        scenes.push(v.scene);
    }
    save_annotations(&paths.annotations, &annotations)?;
    crate::io::write_records(&paths.scenes, SCENES_FORMAT, &scenes)?;
    Ok((paths, annotations, scenes))
}

pub fn load_scenes(path: &Path) -> Result<Vec<SceneRecord>> {
    crate::io::read_records(path, SCENES_FORMAT)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scenarios: Scenarios) -> SynthConfig {
        SynthConfig {
            num_videos: 3,
            frames_per_video: 30,
            width: 96,
            height: 72,
            scenarios,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn ground_truth_precedes_query_frame() {
        for i in 0..20 {
            let v = render_video(&cfg(Scenarios::default()), i).unwrap();
            let a = &v.annotation;
            assert!(a.ground_truth.end() < a.query.query_frame);
            assert!(a.query.query_frame.0 < 30);
            assert_eq!(v.frames.len(), 30);
            for (_, b) in a.ground_truth.iter() {
                assert!(b.right() <= 96.0 && b.bottom() <= 72.0 && b.x() >= 0.0 && b.y() >= 0.0);
            }
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let c = cfg(Scenarios {
            distractor_similar: true,
            ambiguous_context: true,
            blur_background: true,
        });
        let a = render_video(&c, 1).unwrap();
        let b = render_video(&c, 1).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.crop_frame, b.crop_frame);
        assert_eq!(a.scene, b.scene);
    }

    #[test]
    fn blur_only_outside_the_span() {
        let c = cfg(Scenarios {
            blur_background: true,
            ..Scenarios::default()
        });
        let v = render_video(&c, 0).unwrap();
        let s = &v.scene;
        assert!(!s.blurred_frames.is_empty());
        assert!(s.blurred_frames.iter().all(|f| !(s.gt_start..=s.gt_end).contains(f)));
    }

    #[test]
    fn distractor_sits_between_span_and_query() {
        let c = cfg(Scenarios {
            distractor_similar: true,
            ..Scenarios::default()
        });
        for i in 0..5 {
            let v = render_video(&c, i).unwrap();
            let d = v.scene.distractor.expect("room for a distractor");
            assert!(d.end < v.scene.query_frame);
            assert!(d.start > v.scene.gt_end || d.end < v.scene.gt_start);
        }
    }

    #[test]
    fn oversized_target_is_an_error() {
        let mut c = cfg(Scenarios::default());
        c.target_size = Some((100, 10));
        assert!(render_video(&c, 0).is_err());
    }

    #[test]
    fn config_limits() {
        let short = SynthConfig {
            frames_per_video: 1,
            ..SynthConfig::default()
        };
        assert!(short.validate().is_err());
        let narrow = SynthConfig {
            width: 31,
            ..SynthConfig::default()
        };
        assert!(narrow.validate().is_err());
        let tiny = SynthConfig {
            frames_per_video: 2,
            width: 32,
            height: 32,
            ..SynthConfig::default()
        };
        let v = render_video(&tiny, 0).unwrap();
        assert_eq!(v.annotation.query.query_frame, FrameIndex(1));
        assert_eq!(v.annotation.ground_truth.span().len(), 1);
    }
}
