//! Synthetic dataset generator.
//!
//! Classes are (pattern family x hue) combinations. Every family is
//! orientation-bearing — a brightness ramp toward the top-left corner breaks
//! all four rotational symmetries — so the rotation pretext is learnable.
//! Per-image jitter (phase, frequency, placement, noise) keeps classes from
//! collapsing to single templates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Rng;

use super::{Dataset, Image, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_classes: 8,
            per_class: 500,
            size: 32,
            seed: 0,
        }
    }
}

const FAMILIES: usize = 4;

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {}",
            spec.n_classes
        )));
    }
    if spec.per_class < 1 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    if spec.size < 8 {
        return Err(Error::Config(format!(
            "size must be at least 8, got {}",
            spec.size
        )));
    }

    let n_hues = spec.n_classes.div_ceil(FAMILIES);
    let root = Rng::new(spec.seed);
    let mut images = Vec::with_capacity(spec.n_classes * spec.per_class);
    for class in 0..spec.n_classes {
        let family = class % FAMILIES;
        let hue = (class / FAMILIES) as f32 / n_hues as f32;
        let class_rng = root.split(class as u64);
        for item in 0..spec.per_class {
            let mut rng = class_rng.split(item as u64);
            images.push(render(family, hue, spec.size, class as u32, &mut rng));
        }
    }
    let class_names = (0..spec.n_classes)
        .map(|c| format!("{}_h{}", FAMILY_NAMES[c % FAMILIES], c / FAMILIES))
        .collect();
    Dataset::new(images, class_names, Split::Train)
}

const FAMILY_NAMES: [&str; FAMILIES] = ["stripes", "radial", "blob", "checker"];

fn render(family: usize, hue: f32, size: usize, label: u32, rng: &mut Rng) -> Image {
    let (cr, cg, cb) = hue_to_rgb(hue + rng.range_f32(-0.015, 0.015));
    let noise_amp = 0.16;
    let mut pixels = vec![0.0f32; 3 * size * size];

    let pattern: Box<dyn Fn(f32, f32) -> f32> = match family {
        0 => {
            // Oriented stripes, fixed base angle.
            let theta = 25.0f32.to_radians() + rng.range_f32(-0.15, 0.15);
            let freq = rng.range_f32(2.2, 3.4);
            let phase = rng.range_f32(0.0, std::f32::consts::TAU);
            let (s, c) = theta.sin_cos();
            Box::new(move |u, v| {
                0.5 + 0.5 * (std::f32::consts::TAU * freq * (u * c + v * s) + phase).sin()
            })
        }
        1 => {
            // Radial gradient, center pulled off-center so rotations differ.
            let cx = 0.34 + rng.range_f32(-0.08, 0.08);
            let cy = 0.34 + rng.range_f32(-0.08, 0.08);
            let radius = rng.range_f32(0.45, 0.7);
            Box::new(move |u, v| {
                let d = ((u - cx).powi(2) + (v - cy).powi(2)).sqrt();
                (1.0 - d / radius).clamp(0.0, 1.0)
            })
        }
        2 => {
            // Gaussian blob near the top-left corner.
            let cx = 0.22 + rng.range_f32(-0.07, 0.07);
            let cy = 0.22 + rng.range_f32(-0.07, 0.07);
            let sigma = rng.range_f32(0.13, 0.2);
            Box::new(move |u, v| {
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                (-d2 / (2.0 * sigma * sigma)).exp()
            })
        }
        _ => {
            // Checkerboard with rectangular cells (so 90-degree turns differ).
            let fx = rng.range_f32(2.4, 3.2);
            let fy = fx * 1.7;
            let px = rng.range_f32(0.0, 1.0);
            let py = rng.range_f32(0.0, 1.0);
            Box::new(move |u, v| {
                let cell = ((u * fx + px).floor() + (v * fy + py).floor()) as i64;
                if cell.rem_euclid(2) == 0 {
                    0.85
                } else {
                    0.2
                }
            })
        }
    };

    let denom = (size - 1) as f32;
    for y in 0..size {
        for x in 0..size {
            let u = x as f32 / denom;
            let v = y as f32 / denom;
            let val = pattern(u, v);
            // Orientation ramp: brighter toward the top and the left.
            let ramp = (0.55 + 0.45 * (1.0 - v)) * (0.8 + 0.2 * (1.0 - u));
            let base = (0.2 + 0.8 * val) * ramp;
            let n = rng.range_f32(-noise_amp, noise_amp);
            let idx = y * size + x;
            pixels[idx] = (base * cr + n).clamp(0.0, 1.0);
            pixels[size * size + idx] = (base * cg + n).clamp(0.0, 1.0);
            pixels[2 * size * size + idx] = (base * cb + n).clamp(0.0, 1.0);
        }
    }
    Image::new(size, pixels, Some(label)).expect("rendered pixels are clamped")
}

/// Hue (in turns) to a saturated RGB color, s = 0.85, v = 1.
fn hue_to_rgb(hue: f32) -> (f32, f32, f32) {
    let h = (hue.rem_euclid(1.0)) * 6.0;
    let sector = h.floor() as i32 % 6;
    let f = h - h.floor();
    let s = 0.85;
    let (p, q, t) = (1.0 - s, 1.0 - s * f, 1.0 - s * (1.0 - f));
    match sector {
        0 => (1.0, t, p),
        1 => (q, 1.0, p),
        2 => (p, 1.0, t),
        3 => (p, q, 1.0),
        4 => (t, p, 1.0),
        _ => (1.0, p, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_class_zero_is_config_error() {
        let spec = SynthSpec {
            per_class: 0,
            ..SynthSpec::default()
        };
        assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn tiny_size_is_config_error() {
        let spec = SynthSpec {
            size: 7,
            ..SynthSpec::default()
        };
        assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SynthSpec {
            n_classes: 4,
            per_class: 6,
            size: 16,
            seed: 42,
        };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        for (x, y) in a.images().iter().zip(b.images()) {
            assert_eq!(x.pixels(), y.pixels());
            assert_eq!(x.label(), y.label());
        }
    }

    #[test]
    fn exact_class_balance() {
        let spec = SynthSpec {
            n_classes: 8,
            per_class: 500,
            size: 8,
            seed: 1,
        };
        let ds = gen_synthetic(&spec).unwrap();
        assert_eq!(ds.len(), 4000);
        let mut counts = vec![0usize; 8];
        for img in ds.images() {
            counts[img.label().unwrap() as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 500));
    }

    #[test]
    fn every_image_satisfies_invariants() {
        let spec = SynthSpec {
            n_classes: 8,
            per_class: 20,
            size: 16,
            seed: 9,
        };
        let ds = gen_synthetic(&spec).unwrap();
        for img in ds.images() {
            assert!(img.is_valid());
            assert_eq!(img.width(), img.height());
        }
    }
}
