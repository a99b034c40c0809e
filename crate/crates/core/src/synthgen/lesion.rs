use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Diagnosis, Sample, N_ARTIFACTS};
use crate::error::{Error, Result};
use crate::raster::{Image, Mask};
use crate::rng::{self, uniform};

/// Rendering parameters shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub image_size: usize,
    /// How far malignant morphology is pushed away from benign, in `(0, 1]`.
    pub signal_strength: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            image_size: 64,
            signal_strength: 1.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 16 {
            return Err(Error::InvalidConfig(format!(
                "image_size must be >= 16, got {}",
                self.image_size
            )));
        }
        if !(self.signal_strength > 0.0 && self.signal_strength <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "signal_strength must be in (0, 1], got {}",
                self.signal_strength
            )));
        }
        Ok(())
    }
}

// Morphology ranges. Benign lesions draw from the base range; malignant ones add
// `signal_strength` times the extra range.
const RADIUS_FRAC: (f64, f64) = (0.17, 0.28);
const ASPECT: (f64, f64) = (0.75, 1.0);
const CENTER_JITTER_FRAC: f64 = 0.08;
const IRREGULARITY_BASE: (f64, f64) = (0.02, 0.10);
const IRREGULARITY_EXTRA: (f64, f64) = (0.06, 0.16);
const DARKNESS_BASE: (f64, f64) = (0.30, 0.50);
const DARKNESS_EXTRA: (f64, f64) = (0.10, 0.25);
const TEXTURE_BASE: (f64, f64) = (0.02, 0.06);
const TEXTURE_EXTRA: (f64, f64) = (0.04, 0.10);
const HARMONICS: std::ops::RangeInclusive<usize> = 3..=8;

fn draw(r: &mut rng::Rng, range: (f64, f64)) -> f64 {
    uniform(r, range.0, range.1)
}

/// Render a clean lesion. All artifact flags are false and `id` is 0; the
/// dataset generator assigns ids.
pub fn gen_lesion(seed: u64, diagnosis: Diagnosis, params: &RenderParams) -> Sample {
    let size = params.image_size;
    let s = if diagnosis.is_malignant() {
        params.signal_strength
    } else {
        0.0
    };
    let mut r = rng::seeded(rng::derive(seed, rng::tag("lesion")));

    // Skin tone, linear illumination gradient and fine grain.
    let red = uniform(&mut r, 0.78, 0.92);
    let skin = [
        red,
        red * uniform(&mut r, 0.68, 0.78),
        red * uniform(&mut r, 0.58, 0.70),
    ];
    let grad_x = uniform(&mut r, -0.08, 0.08);
    let grad_y = uniform(&mut r, -0.08, 0.08);
    let grain = 0.012;

    // Lesion geometry.
    let sz = size as f64;
    let cx = sz / 2.0 + uniform(&mut r, -CENTER_JITTER_FRAC, CENTER_JITTER_FRAC) * sz;
    let cy = sz / 2.0 + uniform(&mut r, -CENTER_JITTER_FRAC, CENTER_JITTER_FRAC) * sz;
    let radius = draw(&mut r, RADIUS_FRAC) * sz;
    let aspect = draw(&mut r, ASPECT);
    let orient = uniform(&mut r, 0.0, PI);
    let irregularity = draw(&mut r, IRREGULARITY_BASE) + s * draw(&mut r, IRREGULARITY_EXTRA);
    let harmonics: Vec<(f64, f64, f64)> = HARMONICS
        .map(|k| (k as f64, uniform(&mut r, 0.0, 1.0), uniform(&mut r, 0.0, 2.0 * PI)))
        .collect();
    let weight_sum: f64 = harmonics.iter().map(|h| h.1).sum();

    // Pigment.
    let darkness = draw(&mut r, DARKNESS_BASE) + s * draw(&mut r, DARKNESS_EXTRA);
    let texture = draw(&mut r, TEXTURE_BASE) + s * draw(&mut r, TEXTURE_EXTRA);
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                uniform(&mut r, 0.3, 0.8),
                uniform(&mut r, 0.0, PI),
                uniform(&mut r, 0.0, 2.0 * PI),
            )
        })
        .collect();
    let tint = [1.0 - darkness * 0.85, 1.0 - darkness * 1.05, 1.0 - darkness * 1.15];

    let (cos_o, sin_o) = (orient.cos(), orient.sin());
    let mut image = Image::new(size, size);
    let mut mask = Mask::new(size, size);
    for row in 0..size {
        for col in 0..size {
            let x = col as f64 + 0.5;
            let y = row as f64 + 0.5;
            let shade = 1.0 + grad_x * (x / sz - 0.5) + grad_y * (y / sz - 0.5);
            let noise = grain * (r_sum3(&mut r) - 1.5) * 2.0;
            let bg = [
                skin[0] * shade + noise,
                skin[1] * shade + noise,
                skin[2] * shade + noise,
            ];

            // Lesion boundary in the lesion's own frame.
            let dx = x - cx;
            let dy = y - cy;
            let u = dx * cos_o + dy * sin_o;
            let v = (-dx * sin_o + dy * cos_o) / aspect;
            let dist = (u * u + v * v).sqrt();
            let theta = v.atan2(u);
            let wobble: f64 = harmonics
                .iter()
                .map(|&(k, w, phase)| w * (k * theta + phase).cos())
                .sum::<f64>()
                / weight_sum;
            let boundary = radius * (1.0 + irregularity * wobble);
            let inside = boundary - dist;

            let mut px = bg;
            if inside > -0.5 {
                let pattern: f64 = waves
                    .iter()
                    .map(|&(f, a, p)| (f * (x * a.cos() + y * a.sin()) + p).cos())
                    .sum::<f64>()
                    / 3.0;
                let alpha = (inside + 0.5).clamp(0.0, 1.0);
                for c in 0..3 {
                    let lesion = bg[c] * tint[c] * (1.0 + texture * pattern);
                    px[c] = bg[c] * (1.0 - alpha) + lesion * alpha;
                }
            }
            image.set(row, col, px);
            mask.set(row, col, inside > 0.0);
        }
    }
    image.clamp();
    image.quantize();

    Sample {
        id: 0,
        seed,
        diagnosis,
        artifacts: [false; N_ARTIFACTS],
        image,
        mask,
    }
}

fn r_sum3(r: &mut rng::Rng) -> f64 {
    uniform(r, 0.0, 1.0) + uniform(r, 0.0, 1.0) + uniform(r, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = RenderParams::default();
        let a = gen_lesion(7, Diagnosis::Benign, &p);
        let b = gen_lesion(7, Diagnosis::Benign, &p);
        assert_eq!(a, b);
        assert_ne!(a.image, gen_lesion(8, Diagnosis::Benign, &p).image);
    }

    #[test]
    fn output_is_valid_and_clean() {
        let p = RenderParams::default();
        for seed in 0..20 {
            for d in [Diagnosis::Benign, Diagnosis::Malignant] {
                let s = gen_lesion(seed, d, &p);
                s.validate().unwrap();
                assert_eq!(s.artifacts, [false; N_ARTIFACTS]);
                assert_eq!(s.diagnosis, d);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(RenderParams {
            image_size: 8,
            signal_strength: 1.0
        }
        .validate()
        .is_err());
        assert!(RenderParams {
            image_size: 32,
            signal_strength: 0.0
        }
        .validate()
        .is_err());
    }
}
