//! The image perturbation operator and its pieces: color jitter, grayscale,
//! random resized crop, horizontal flip, exact 90-degree rotations, and
//! CutMix patch geometry.
//!
//! All operators are pure functions of (input, rng, config) and map valid
//! images to valid images of the configured size.

use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Knobs for the perturbation operator.
///
/// Jitter strengths follow common self-supervision practice; the transform
/// families themselves are the contract, the magnitudes are configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
    /// Hue rotation range in turns (1.0 = full wheel).
    pub hue: f32,
    pub grayscale_prob: f32,
    pub flip_prob: f32,
    /// Crop area as a fraction of the source area, (min, max).
    pub crop_scale: (f32, f32),
    /// Crop aspect ratio range, (min, max).
    pub aspect: (f32, f32),
    pub out_size: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
            hue: 0.1,
            grayscale_prob: 0.2,
            flip_prob: 0.5,
            crop_scale: (0.3, 1.0),
            aspect: (0.75, 4.0 / 3.0),
            out_size: 32,
        }
    }
}

impl PerturbConfig {
    /// A config under which `perturb` is the identity (for a same-size input).
    pub fn identity(out_size: usize) -> PerturbConfig {
        PerturbConfig {
            brightness: 0.0,
            contrast: 0.0,
            saturation: 0.0,
            hue: 0.0,
            grayscale_prob: 0.0,
            flip_prob: 0.0,
            crop_scale: (1.0, 1.0),
            aspect: (1.0, 1.0),
            out_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("saturation", self.saturation),
            ("hue", self.hue),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, p) in [("grayscale_prob", self.grayscale_prob), ("flip_prob", self.flip_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        for (name, (lo, hi)) in [("crop_scale", self.crop_scale), ("aspect", self.aspect)] {
            if !(lo <= hi && lo > 0.0) {
                return Err(Error::Config(format!(
                    "{name} range must satisfy 0 < min <= max, got ({lo}, {hi})"
                )));
            }
        }
        if self.out_size < 2 {
            return Err(Error::Config("out_size must be >= 2".into()));
        }
        Ok(())
    }
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

fn map_pixels(img: &Image, mut f: impl FnMut(f32, f32, f32) -> (f32, f32, f32)) -> Image {
    let s = img.size();
    let mut out = img.clone();
    for y in 0..s {
        for x in 0..s {
            let (r, g, b) = f(img.get(0, y, x), img.get(1, y, x), img.get(2, y, x));
            out.set(0, y, x, r.clamp(0.0, 1.0));
            out.set(1, y, x, g.clamp(0.0, 1.0));
            out.set(2, y, x, b.clamp(0.0, 1.0));
        }
    }
    out
}

/// Multiply all channels by `factor`.
pub fn brightness(img: &Image, factor: f32) -> Image {
    map_pixels(img, |r, g, b| (r * factor, g * factor, b * factor))
}

/// Blend toward the image's mean luma: `out = mean + factor * (px - mean)`.
pub fn contrast(img: &Image, factor: f32) -> Image {
    let s = img.size();
    let mut mean = 0.0f64;
    for y in 0..s {
        for x in 0..s {
            mean += f64::from(luma(img.get(0, y, x), img.get(1, y, x), img.get(2, y, x)));
        }
    }
    let mean = (mean / (s * s) as f64) as f32;
    map_pixels(img, |r, g, b| {
        (
            mean + factor * (r - mean),
            mean + factor * (g - mean),
            mean + factor * (b - mean),
        )
    })
}

/// Blend toward per-pixel luma: `out = luma + factor * (px - luma)`.
pub fn saturation(img: &Image, factor: f32) -> Image {
    map_pixels(img, |r, g, b| {
        let l = luma(r, g, b);
        (
            l + factor * (r - l),
            l + factor * (g - l),
            l + factor * (b - l),
        )
    })
}

/// Luma-preserving hue rotation by `turns` of the chroma plane (YIQ space).
pub fn hue_rotate(img: &Image, turns: f32) -> Image {
    let theta = turns * std::f32::consts::TAU;
    let (sin, cos) = theta.sin_cos();
    map_pixels(img, |r, g, b| {
        let y = 0.299 * r + 0.587 * g + 0.114 * b;
        let i = 0.595_716 * r - 0.274_453 * g - 0.321_263 * b;
        let q = 0.211_456 * r - 0.522_591 * g + 0.311_135 * b;
        let i2 = i * cos - q * sin;
        let q2 = i * sin + q * cos;
        (
            y + 0.956_295 * i2 + 0.621_024 * q2,
            y - 0.272_122 * i2 - 0.647_380 * q2,
            y - 1.106_989 * i2 + 1.704_614 * q2,
        )
    })
}

/// Brightness / contrast / saturation / hue in randomized order, each with a
/// factor drawn from its configured range. Output clamped to [0, 1].
pub fn color_jitter(img: &Image, rng: &mut Rng, cfg: &PerturbConfig) -> Image {
    let mut order = [0usize, 1, 2, 3];
    rng.shuffle(&mut order);
    let b = rng.range_f32(1.0 - cfg.brightness, 1.0 + cfg.brightness);
    let c = rng.range_f32(1.0 - cfg.contrast, 1.0 + cfg.contrast);
    let s = rng.range_f32(1.0 - cfg.saturation, 1.0 + cfg.saturation);
    let h = rng.range_f32(-cfg.hue, cfg.hue);
    let mut out = img.clone();
    for op in order {
        out = match op {
            0 if cfg.brightness > 0.0 => brightness(&out, b),
            1 if cfg.contrast > 0.0 => contrast(&out, c),
            2 if cfg.saturation > 0.0 => saturation(&out, s),
            3 if cfg.hue > 0.0 => hue_rotate(&out, h),
            _ => out,
        };
    }
    out
}

/// All three channels set to `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &Image) -> Image {
    map_pixels(img, |r, g, b| {
        let l = luma(r, g, b);
        (l, l, l)
    })
}

/// Bilinear sample with edge clamping at fractional coordinates.
fn bilinear(img: &Image, c: usize, y: f32, x: f32) -> f32 {
    let s = img.size() as isize;
    let clamp = |v: isize| v.clamp(0, s - 1) as usize;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0i, y0i) = (x0 as isize, y0 as isize);
    let v00 = img.get(c, clamp(y0i), clamp(x0i));
    let v01 = img.get(c, clamp(y0i), clamp(x0i + 1));
    let v10 = img.get(c, clamp(y0i + 1), clamp(x0i));
    let v11 = img.get(c, clamp(y0i + 1), clamp(x0i + 1));
    let top = v00 + (v01 - v00) * fx;
    let bot = v10 + (v11 - v10) * fx;
    top + (bot - top) * fy
}

/// Crop a `cw x ch` window at `(cx, cy)` and bilinearly resize to
/// `out_size x out_size` (corner-aligned mapping, so a full-image crop at the
/// native size is the identity).
pub fn crop_resize(img: &Image, cx: usize, cy: usize, cw: usize, ch: usize, out_size: usize) -> Image {
    let mut out = Image::black(out_size, img.label());
    let sx = if out_size > 1 { (cw - 1) as f32 / (out_size - 1) as f32 } else { 0.0 };
    let sy = if out_size > 1 { (ch - 1) as f32 / (out_size - 1) as f32 } else { 0.0 };
    for c in 0..3 {
        for y in 0..out_size {
            for x in 0..out_size {
                let src_y = cy as f32 + y as f32 * sy;
                let src_x = cx as f32 + x as f32 * sx;
                out.set(c, y, x, bilinear(img, c, src_y, src_x).clamp(0.0, 1.0));
            }
        }
    }
    out
}

/// Random area/aspect crop, then bilinear resize to `cfg.out_size`.
///
/// Ten attempts to land a window inside the image, then a center-crop
/// fallback.
pub fn random_resized_crop(img: &Image, rng: &mut Rng, cfg: &PerturbConfig) -> Image {
    let s = img.size();
    let area = (s * s) as f32;
    for _ in 0..10 {
        let target = area * rng.range_f32(cfg.crop_scale.0, cfg.crop_scale.1);
        let ratio = rng.range_f32(cfg.aspect.0, cfg.aspect.1);
        let cw = (target * ratio).sqrt().round() as usize;
        let ch = (target / ratio).sqrt().round() as usize;
        if (1..=s).contains(&cw) && (1..=s).contains(&ch) {
            let cx = rng.below(s - cw + 1);
            let cy = rng.below(s - ch + 1);
            return crop_resize(img, cx, cy, cw, ch, cfg.out_size);
        }
    }
    // Center crop fallback: the whole (square) image.
    crop_resize(img, 0, 0, s, s, cfg.out_size)
}

/// Mirror columns; an involution, bit-exact.
pub fn hflip(img: &Image) -> Image {
    let s = img.size();
    let mut out = img.clone();
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                out.set(c, y, x, img.get(c, y, s - 1 - x));
            }
        }
    }
    out
}

/// Exact `k x 90`-degree counterclockwise rotation by index permutation.
pub fn rotate90(img: &Image, k: usize) -> Image {
    let s = img.size();
    let mut out = img.clone();
    match k % 4 {
        0 => {}
        1 => {
            // out(y, x) = in(x, s-1-y)
            for c in 0..3 {
                for y in 0..s {
                    for x in 0..s {
                        out.set(c, y, x, img.get(c, x, s - 1 - y));
                    }
                }
            }
        }
        2 => {
            for c in 0..3 {
                for y in 0..s {
                    for x in 0..s {
                        out.set(c, y, x, img.get(c, s - 1 - y, s - 1 - x));
                    }
                }
            }
        }
        _ => {
            for c in 0..3 {
                for y in 0..s {
                    for x in 0..s {
                        out.set(c, y, x, img.get(c, s - 1 - x, y));
                    }
                }
            }
        }
    }
    out
}

/// The full perturbation pipeline:
/// crop/resize -> color jitter -> grayscale(p) -> hflip(p).
pub fn perturb(img: &Image, rng: &mut Rng, cfg: &PerturbConfig) -> Image {
    let mut out = random_resized_crop(img, rng, cfg);
    out = color_jitter(&out, rng, cfg);
    if rng.bernoulli(cfg.grayscale_prob) {
        out = to_grayscale(&out);
    }
    if rng.bernoulli(cfg.flip_prob) {
        out = hflip(&out);
    }
    out
}

/// Axis-aligned patch for CutMix, with its mixing coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    /// `1 - (w*h)/(W*H)`: the weight of the *surrounding* image's target.
    pub lambda: f32,
}

/// Sample a box with side fractions drawn independently from `frac_range`,
/// placed uniformly among positions that keep it inside a `w x h` image.
pub fn sample_cutbox(rng: &mut Rng, img_w: usize, img_h: usize, frac_range: (f32, f32)) -> CutBox {
    debug_assert!(
        (0.0..=1.0).contains(&frac_range.0) && frac_range.0 <= frac_range.1 && frac_range.1 <= 1.0
    );
    let bw = (rng.range_f32(frac_range.0, frac_range.1) * img_w as f32).round() as usize;
    let bh = (rng.range_f32(frac_range.0, frac_range.1) * img_h as f32).round() as usize;
    let x0 = if bw >= img_w { 0 } else { rng.below(img_w - bw + 1) };
    let y0 = if bh >= img_h { 0 } else { rng.below(img_h - bh + 1) };
    CutBox {
        x0,
        y0,
        w: bw,
        h: bh,
        lambda: 1.0 - (bw * bh) as f32 / (img_w * img_h) as f32,
    }
}

/// `a` outside the box, `b` inside it.
pub fn cutmix_images(a: &Image, b: &Image, cut: &CutBox) -> Result<Image> {
    if a.size() != b.size() {
        return Err(Error::Shape(format!(
            "cutmix inputs disagree: {} vs {}",
            a.size(),
            b.size()
        )));
    }
    if cut.x0 + cut.w > a.size() || cut.y0 + cut.h > a.size() {
        return Err(Error::Shape("cut box extends outside the image".into()));
    }
    let mut out = a.clone();
    for c in 0..3 {
        for y in cut.y0..cut.y0 + cut.h {
            for x in cut.x0..cut.x0 + cut.w {
                out.set(c, y, x, b.get(c, y, x));
            }
        }
    }
    Ok(out)
}
