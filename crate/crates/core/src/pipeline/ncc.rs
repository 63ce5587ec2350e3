//! Zero-normalized cross-correlation template matching.
//!
//! Window means and variances come from summed-area tables, so each window
//! costs one pass over the template for the cross term only. A window (or
//! template) without intensity variance scores 0.

use image::imageops::{self, FilterType};
use image::GrayImage;

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Below this summed squared deviation a window counts as flat.
const FLAT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NccParams {
    /// Template scale factors tried at every frame.
    pub scales: Vec<f64>,
    /// Coarse grid step in pixels; the coarse argmax is refined exhaustively
    /// within `±stride`. A stride of 1 is a full exhaustive search.
    pub stride: u32,
}

impl Default for NccParams {
    fn default() -> Self {
        NccParams {
            scales: vec![0.75, 1.0, 1.33],
            stride: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatch {
    pub bbox: BBox,
    pub score: f64,
}

/// A frame prepared for repeated matching.
#[derive(Debug, Clone)]
pub struct Plane {
    width: u32,
    height: u32,
    px: Vec<f64>,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Plane {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let px: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
        let stride = w as usize + 1;
        let mut sum = vec![0.0; stride * (h as usize + 1)];
        let mut sq = vec![0.0; stride * (h as usize + 1)];
        for y in 0..h as usize {
            let mut row = 0.0;
            let mut row_sq = 0.0;
            for x in 0..w as usize {
                let v = px[y * w as usize + x];
                row += v;
                row_sq += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
                sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
            }
        }
        Plane {
            width: w,
            height: h,
            px,
            sum,
            sq,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn rect(table: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
        table[(y + h) * stride + x + w] - table[y * stride + x + w] - table[(y + h) * stride + x]
            + table[y * stride + x]
    }

    /// Sum of squared deviations from the mean over a window.
    fn deviation(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let stride = self.width as usize + 1;
        let n = (w * h) as f64;
        let s = Self::rect(&self.sum, stride, x, y, w, h);
        let ss = Self::rect(&self.sq, stride, x, y, w, h);
        (ss - s * s / n).max(0.0)
    }
}

/// A zero-mean template.
#[derive(Debug, Clone)]
pub struct Template {
    width: u32,
    height: u32,
    zero_mean: Vec<f64>,
    norm: f64,
}

impl Template {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = img.dimensions();
        let n = (w * h) as f64;
        let mean = img.as_raw().iter().map(|&v| v as f64).sum::<f64>() / n;
        let zero_mean: Vec<f64> = img.as_raw().iter().map(|&v| v as f64 - mean).collect();
        let norm = zero_mean.iter().map(|v| v * v).sum::<f64>().sqrt();
        Template {
            width: w,
            height: h,
            zero_mean,
            norm,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn fits(&self, plane: &Plane) -> bool {
        self.width <= plane.width && self.height <= plane.height
    }

    /// Correlation of the template with the window whose top-left is `(x, y)`.
    pub fn score_at(&self, plane: &Plane, x: u32, y: u32) -> f64 {
        let (tw, th) = (self.width as usize, self.height as usize);
        let (x, y) = (x as usize, y as usize);
        let dev = plane.deviation(x, y, tw, th);
        if dev <= FLAT_EPS || self.norm * self.norm <= FLAT_EPS {
            return 0.0;
        }
        let fw = plane.width as usize;
        let mut cross = 0.0;
        for ty in 0..th {
            let frow = &plane.px[(y + ty) * fw + x..(y + ty) * fw + x + tw];
            let trow = &self.zero_mean[ty * tw..(ty + 1) * tw];
            cross += frow.iter().zip(trow).map(|(f, t)| f * t).sum::<f64>();
        }
        (cross / (self.norm * dev.sqrt())).clamp(-1.0, 1.0)
    }

    fn to_match(&self, x: u32, y: u32, score: f64) -> NccMatch {
        NccMatch {
            bbox: BBox::new(x as f64, y as f64, self.width as f64, self.height as f64)
                .expect("template has positive size"),
            score,
        }
    }

    /// Exhaustive search over top-left positions `xs x ys` (inclusive).
    /// Ties keep the first position in row-major order.
    fn search(&self, plane: &Plane, xs: (u32, u32), ys: (u32, u32), step: u32) -> (u32, u32, f64) {
        let mut best = (xs.0, ys.0, f64::NEG_INFINITY);
        for y in grid(ys.0, ys.1, step) {
            for x in grid(xs.0, xs.1, step) {
                let s = self.score_at(plane, x, y);
                if s > best.2 {
                    best = (x, y, s);
                }
            }
        }
        best
    }

    /// Coarse-to-fine search over the whole plane.
    pub fn best_match(&self, plane: &Plane, stride: u32) -> Option<NccMatch> {
        if !self.fits(plane) {
            return None;
        }
        let stride = stride.max(1);
        let max_x = plane.width - self.width;
        let max_y = plane.height - self.height;
        let (cx, cy, coarse) = self.search(plane, (0, max_x), (0, max_y), stride);
        if stride == 1 {
            return Some(self.to_match(cx, cy, coarse));
        }
        let xs = (cx.saturating_sub(stride), (cx + stride).min(max_x));
        let ys = (cy.saturating_sub(stride), (cy + stride).min(max_y));
        let (x, y, s) = self.search(plane, xs, ys, 1);
        Some(self.to_match(x, y, s))
    }

    /// Exhaustive search restricted to windows lying inside `region`. When the
    /// region is narrower than the template along an axis, the window is
    /// centred on the region along that axis.
    pub fn best_match_in(&self, plane: &Plane, region: &BBox) -> Option<NccMatch> {
        if !self.fits(plane) {
            return None;
        }
        let axis = |lo: f64, hi: f64, size: u32, limit: u32| -> (u32, u32) {
            let max = (limit - size) as f64;
            let a = lo.ceil().clamp(0.0, max);
            let b = (hi - size as f64).floor().clamp(0.0, max);
            if a <= b {
                (a as u32, b as u32)
            } else {
                let c = ((lo + hi - size as f64) / 2.0).round().clamp(0.0, max) as u32;
                (c, c)
            }
        };
        let xs = axis(region.x(), region.right(), self.width, plane.width);
        let ys = axis(region.y(), region.bottom(), self.height, plane.height);
        let (x, y, s) = self.search(plane, xs, ys, 1);
        Some(self.to_match(x, y, s))
    }
}

fn grid(lo: u32, hi: u32, step: u32) -> impl Iterator<Item = u32> {
    let last = !(hi - lo).is_multiple_of(step);
    (lo..=hi).step_by(step as usize).chain(last.then_some(hi))
}

/// Templates for every usable scale of a crop.
#[derive(Debug, Clone)]
pub struct ScaledTemplates {
    templates: Vec<Template>,
    stride: u32,
}

impl ScaledTemplates {
    /// Builds one template per scale. Scales whose template would be larger
    /// than `max_w x max_h` are dropped.
    pub fn new(crop: &GrayImage, params: &NccParams, max_w: u32, max_h: u32) -> Result<Self> {
        let (cw, ch) = crop.dimensions();
        let mut templates = Vec::with_capacity(params.scales.len());
        for &s in &params.scales {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("template scale {s} must be positive")));
            }
            let w = ((cw as f64 * s).round() as u32).max(1);
            let h = ((ch as f64 * s).round() as u32).max(1);
            if w > max_w || h > max_h {
                continue;
            }
            let img = if (w, h) == (cw, ch) {
                crop.clone()
            } else {
                imageops::resize(crop, w, h, FilterType::Triangle)
            };
            templates.push(Template::new(&img));
        }
        if templates.is_empty() {
            return Err(Error::TemplateTooLarge {
                template_w: cw,
                template_h: ch,
                frame_w: max_w,
                frame_h: max_h,
            });
        }
        Ok(ScaledTemplates {
            templates,
            stride: params.stride,
        })
    }

    /// Best match over all scales; ties keep the earlier scale.
    pub fn best_match(&self, plane: &Plane) -> Option<NccMatch> {
        self.templates
            .iter()
            .filter_map(|t| t.best_match(plane, self.stride))
            .fold(None, |best: Option<NccMatch>, m| match best {
                Some(b) if b.score >= m.score => Some(b),
                _ => Some(m),
            })
    }
}

/// Best multi-scale ZNCC window of `template` inside `frame`.
pub fn ncc_score(frame: &GrayImage, template: &GrayImage, params: &NccParams) -> Result<NccMatch> {
    let templates = ScaledTemplates::new(template, params, frame.width(), frame.height())?;
    templates.best_match(&Plane::new(frame)).ok_or(Error::TemplateTooLarge {
        template_w: template.width(),
        template_h: template.height(),
        frame_w: frame.width(),
        frame_h: frame.height(),
    })
}
