use serde::{Deserialize, Serialize};

use super::color::shift_hue;
use crate::raster::{Image, Mask};
use crate::rng::{self, uniform};
use crate::synthgen::Sample;

/// Random flips, resized crop, rotation and hue shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    pub hflip_p: f64,
    pub vflip_p: f64,
    /// Crop area as a fraction of the image.
    pub crop_area_range: (f64, f64),
    /// Degrees.
    pub rotation_range: (f64, f64),
    /// Fraction of the full hue circle.
    pub hue_range: (f64, f64),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            vflip_p: 0.5,
            crop_area_range: (0.75, 1.0),
            rotation_range: (-45.0, 45.0),
            hue_range: (-0.2, 0.2),
        }
    }
}

impl AugmentPolicy {
    /// A policy whose every draw is the identity.
    pub fn identity() -> Self {
        Self {
            hflip_p: 0.0,
            vflip_p: 0.0,
            crop_area_range: (1.0, 1.0),
            rotation_range: (0.0, 0.0),
            hue_range: (0.0, 0.0),
        }
    }
}

struct Draw {
    hflip: bool,
    vflip: bool,
    crop_area: f64,
    crop_y: f64,
    crop_x: f64,
    angle: f64,
    hue: f64,
}

impl Draw {
    fn sample(policy: &AugmentPolicy, seed: u64) -> Self {
        let mut r = rng::seeded(rng::derive(seed, rng::tag("augment")));
        // Every field consumes a draw so the stream layout is policy-independent.
        let hflip = uniform(&mut r, 0.0, 1.0) < policy.hflip_p;
        let vflip = uniform(&mut r, 0.0, 1.0) < policy.vflip_p;
        let crop_area = uniform(&mut r, policy.crop_area_range.0, policy.crop_area_range.1);
        let crop_y = uniform(&mut r, 0.0, 1.0);
        let crop_x = uniform(&mut r, 0.0, 1.0);
        let angle = uniform(&mut r, policy.rotation_range.0, policy.rotation_range.1);
        let hue = uniform(&mut r, policy.hue_range.0, policy.hue_range.1);
        Self {
            hflip,
            vflip,
            crop_area,
            crop_y,
            crop_x,
            angle,
            hue,
        }
    }
}

/// Reflect a continuous coordinate into `[0, len]`.
fn reflect(v: f64, len: f64) -> f64 {
    let m = v.rem_euclid(2.0 * len);
    if m > len {
        2.0 * len - m
    } else {
        m
    }
}

/// Apply, in order: horizontal flip, vertical flip, resized crop, rotation with
/// reflection padding and hue shift. The mask follows the geometric steps with
/// nearest-neighbour sampling. Crop and rotation are composed into a single
/// resampling pass.
pub fn augment(sample: &Sample, policy: &AugmentPolicy, seed: u64) -> Sample {
    let d = Draw::sample(policy, seed);
    let (h, w) = sample.image.dims();
    let (hf, wf) = (h as f64, w as f64);
    let side = d.crop_area.sqrt();
    let (ch, cw) = (hf * side, wf * side);
    let oy = d.crop_y * (hf - ch);
    let ox = d.crop_x * (wf - cw);
    let theta = d.angle.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (cy, cx) = (hf / 2.0, wf / 2.0);

    let mut out = sample.clone();
    let identity_geometry = !d.hflip && !d.vflip && side == 1.0 && theta == 0.0;
    if !identity_geometry {
        let mut image = Image::new(h, w);
        let mut mask = Mask::new(h, w);
        for row in 0..h {
            for col in 0..w {
                let x = col as f64 + 0.5 - cx;
                let y = row as f64 + 0.5 - cy;
                // Inverse rotation into the cropped frame.
                let xr = reflect(cx + x * cos + y * sin, wf);
                let yr = reflect(cy - x * sin + y * cos, hf);
                let mut sx = ox + xr * (cw / wf);
                let mut sy = oy + yr * (ch / hf);
                if d.hflip {
                    sx = wf - sx;
                }
                if d.vflip {
                    sy = hf - sy;
                }
                image.set(row, col, bilinear(&sample.image, sx - 0.5, sy - 0.5));
                let mr = (sy.floor().max(0.0) as usize).min(h - 1);
                let mc = (sx.floor().max(0.0) as usize).min(w - 1);
                mask.set(row, col, sample.mask.get(mr, mc));
            }
        }
        out.image = image;
        out.mask = mask;
    }
    if d.hue != 0.0 {
        for row in 0..h {
            for col in 0..w {
                let px = out.image.get(row, col);
                out.image.set(row, col, shift_hue(px, d.hue));
            }
        }
    }
    out
}

fn bilinear(img: &Image, x: f64, y: f64) -> [f64; 3] {
    let (h, w) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p00 = img.get(y0, x0);
    let p01 = img.get(y0, x1);
    let p10 = img.get(y1, x0);
    let p11 = img.get(y1, x1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let v = p00[c] * (1.0 - fx) * (1.0 - fy)
            + p01[c] * fx * (1.0 - fy)
            + p10[c] * (1.0 - fx) * fy
            + p11[c] * fx * fy;
        out[c] = v.clamp(0.0, 1.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_lesion, Diagnosis, RenderParams};

    fn sample() -> Sample {
        gen_lesion(4, Diagnosis::Malignant, &RenderParams::default())
    }

    #[test]
    fn identity_policy_is_identity() {
        let s = sample();
        for seed in 0..5 {
            assert_eq!(augment(&s, &AugmentPolicy::identity(), seed), s);
        }
    }

    #[test]
    fn flips_alone_are_exact() {
        let s = sample();
        let policy = AugmentPolicy {
            hflip_p: 1.0,
            ..AugmentPolicy::identity()
        };
        let out = augment(&s, &policy, 0);
        for row in 0..64 {
            for col in 0..64 {
                assert_eq!(out.image.get(row, col), s.image.get(row, col.abs_diff(63)));
                assert_eq!(out.mask.get(row, col), s.mask.get(row, 63 - col));
            }
        }
    }

    #[test]
    fn deterministic_and_in_range() {
        let s = sample();
        let p = AugmentPolicy::default();
        for seed in 0..10 {
            let a = augment(&s, &p, seed);
            assert_eq!(a, augment(&s, &p, seed));
            assert_eq!(a.image.dims(), s.image.dims());
            assert!(a.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(augment(&s, &p, 1).image, augment(&s, &p, 2).image);
    }

    #[test]
    fn gray_image_survives_hue_shift() {
        let mut s = sample();
        s.image = Image::filled(64, 64, [0.4, 0.4, 0.4]);
        let p = AugmentPolicy {
            hue_range: (0.1, 0.2),
            ..AugmentPolicy::identity()
        };
        assert_eq!(augment(&s, &p, 3).image, s.image);
    }

    #[test]
    fn reflection_stays_in_bounds() {
        for v in [-70.0, -1.0, 0.0, 12.5, 64.0, 65.0, 200.0] {
            let r = reflect(v, 64.0);
            assert!((0.0..=64.0).contains(&r));
        }
        assert_eq!(reflect(-1.0, 64.0), 1.0);
        assert_eq!(reflect(65.0, 64.0), 63.0);
    }
}
