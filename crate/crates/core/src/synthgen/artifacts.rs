//! Artifact renderers.
//!
//! Geometry is drawn from the fixed ranges below. `dark_corner`, `gel_border`,
//! `ruler` and `patch` never touch lesion pixels; `hair`, `gel_bubble` and `ink`
//! may cover the lesion.

use std::f64::consts::PI;

use super::{ArtifactKind, Sample};
use crate::error::{Error, Result};
use crate::raster::{Image, Mask};
use crate::rng::{self, chance, int_in, uniform, Rng};

/// Render `kind` onto a copy of `sample` and set its flag.
pub fn inject_artifact(sample: &Sample, kind: ArtifactKind, seed: u64) -> Result<Sample> {
    if sample.has(kind) {
        return Err(Error::DuplicateArtifact(kind));
    }
    let mut out = sample.clone();
    let mut r = rng::seeded(rng::derive(seed, rng::tag(kind.name())));
    let mut canvas = Canvas {
        image: &mut out.image,
        mask: &sample.mask,
        background_only: kind.background_only(),
    };
    match kind {
        ArtifactKind::DarkCorner => dark_corner(&mut canvas, &mut r),
        ArtifactKind::Hair => hair(&mut canvas, &mut r),
        ArtifactKind::GelBorder => gel_border(&mut canvas, &mut r),
        ArtifactKind::GelBubble => gel_bubbles(&mut canvas, &mut r),
        ArtifactKind::Ruler => ruler(&mut canvas, &mut r),
        ArtifactKind::Ink => ink(&mut canvas, &mut r),
        ArtifactKind::Patch => patch(&mut canvas, &mut r),
    }
    out.image.quantize();
    out.artifacts[kind.index()] = true;
    Ok(out)
}

struct Canvas<'a> {
    image: &'a mut Image,
    mask: &'a Mask,
    background_only: bool,
}

impl Canvas<'_> {
    fn size(&self) -> usize {
        self.image.height()
    }

    fn paint(&mut self, row: usize, col: usize, rgb: [f64; 3], alpha: f64) {
        if self.background_only && self.mask.get(row, col) {
            return;
        }
        self.image.blend(row, col, rgb, alpha);
    }

    /// Per-pixel alpha layer, so overlapping primitives of one stroke don't
    /// darken twice.
    fn layer(&self) -> Vec<f64> {
        vec![0.0; self.size() * self.size()]
    }

    fn apply_layer(&mut self, layer: &[f64], rgb: [f64; 3]) {
        let n = self.size();
        for row in 0..n {
            for col in 0..n {
                let a = layer[row * n + col];
                if a > 0.0 {
                    self.paint(row, col, rgb, a);
                }
            }
        }
    }

    /// Anti-aliased disc into an alpha layer (max-composited).
    fn stamp_disc(&self, layer: &mut [f64], cx: f64, cy: f64, radius: f64, alpha: f64) {
        let n = self.size() as isize;
        let lo_r = ((cy - radius - 1.0).floor() as isize).max(0);
        let hi_r = ((cy + radius + 1.0).ceil() as isize).min(n - 1);
        let lo_c = ((cx - radius - 1.0).floor() as isize).max(0);
        let hi_c = ((cx + radius + 1.0).ceil() as isize).min(n - 1);
        for row in lo_r..=hi_r {
            for col in lo_c..=hi_c {
                let dx = col as f64 + 0.5 - cx;
                let dy = row as f64 + 0.5 - cy;
                let cover = (radius - (dx * dx + dy * dy).sqrt() + 0.5).clamp(0.0, 1.0);
                let i = row as usize * n as usize + col as usize;
                layer[i] = layer[i].max(cover * alpha);
            }
        }
    }
}

fn dark_corner(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size();
    let half_diag = n as f64 / std::f64::consts::SQRT_2;
    // Circular aperture: onset near the inscribed circle, so the darkening
    // reaches the edges as well as the corners.
    let onset = uniform(r, 0.62, 0.72);
    let width = uniform(r, 0.06, 0.14);
    let strength = uniform(r, 0.85, 1.0);
    let color = [0.03, 0.025, 0.02];
    let centre = n as f64 / 2.0;
    for row in 0..n {
        for col in 0..n {
            let dx = col as f64 + 0.5 - centre;
            let dy = row as f64 + 0.5 - centre;
            let d = (dx * dx + dy * dy).sqrt() / half_diag;
            let a = ((d - onset) / width).clamp(0.0, 1.0) * strength;
            if a > 0.0 {
                c.paint(row, col, color, a);
            }
        }
    }
}

fn hair(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    let count = int_in(r, 3, 10);
    for _ in 0..count {
        let x0 = uniform(r, 0.0, n);
        let y0 = uniform(r, 0.0, n);
        let dir = uniform(r, 0.0, 2.0 * PI);
        let len = uniform(r, 0.4, 0.9) * n;
        let x2 = x0 + len * dir.cos();
        let y2 = y0 + len * dir.sin();
        let bend = uniform(r, -0.3, 0.3) * len;
        let x1 = (x0 + x2) / 2.0 - bend * dir.sin();
        let y1 = (y0 + y2) / 2.0 + bend * dir.cos();
        let half_width = uniform(r, 0.6, 1.1) * n / 64.0;
        let shade = uniform(r, 0.7, 1.3);
        let alpha = uniform(r, 0.75, 0.95);
        let color = [0.09 * shade, 0.065 * shade, 0.05 * shade];

        let mut layer = c.layer();
        let steps = (len * 2.0).ceil() as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let u = 1.0 - t;
            let x = u * u * x0 + 2.0 * u * t * x1 + t * t * x2;
            let y = u * u * y0 + 2.0 * u * t * y1 + t * t * y2;
            c.stamp_disc(&mut layer, x, y, half_width, alpha);
        }
        c.apply_layer(&layer, color);
    }
}

/// Which image edge an edge-anchored artifact hugs.
#[derive(Clone, Copy)]
enum Edge {
    Top,
    Bottom,
    Left,
    Right,
}

impl Edge {
    const ALL: [Edge; 4] = [Edge::Top, Edge::Bottom, Edge::Left, Edge::Right];

    fn random(r: &mut Rng) -> Edge {
        Edge::ALL[int_in(r, 0, 3)]
    }

    /// Map (distance from this edge, position along it) to image (x, y).
    fn to_xy(self, depth: f64, along: f64, n: f64) -> (f64, f64) {
        match self {
            Edge::Top => (along, depth),
            Edge::Bottom => (along, n - depth),
            Edge::Left => (depth, along),
            Edge::Right => (n - depth, along),
        }
    }

    /// Inverse of [`Edge::to_xy`] for a pixel centre.
    fn depth_along(self, x: f64, y: f64, n: f64) -> (f64, f64) {
        match self {
            Edge::Top => (y, x),
            Edge::Bottom => (n - y, x),
            Edge::Left => (x, y),
            Edge::Right => (n - x, y),
        }
    }
}

fn gel_border(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    let edge = Edge::random(r);
    let u = n / 64.0;
    let radius = uniform(r, 1.5, 3.0) * n;
    let reach = uniform(r, 8.0, 16.0) * u;
    let along0 = uniform(r, 0.3, 0.7) * n;
    let thickness = uniform(r, 2.0, 3.5) * u;
    // Circle centre sits outside the image beyond `edge`.
    let (cx, cy) = edge.to_xy(reach - radius, along0, n);
    let bright = [0.96, 0.96, 0.98];
    let size = c.size();
    for row in 0..size {
        for col in 0..size {
            let x = col as f64 + 0.5;
            let y = row as f64 + 0.5;
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            let band = (thickness / 2.0 - (d - radius).abs() + 0.5).clamp(0.0, 1.0) * 0.85;
            let haze = if d < radius { 0.45 } else { 0.0 };
            let a = band.max(haze);
            if a > 0.0 {
                c.paint(row, col, bright, a);
            }
        }
    }
}

fn gel_bubbles(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    let u = n / 64.0;
    let count = int_in(r, 2, 8);
    let white = [0.97, 0.97, 1.0];
    for _ in 0..count {
        let cx = uniform(r, 0.0, n);
        let cy = uniform(r, 0.0, n);
        let radius = uniform(r, 2.5, 5.0) * u;
        let size = c.size() as isize;
        let lo_r = ((cy - radius - 2.0).floor() as isize).max(0);
        let hi_r = ((cy + radius + 2.0).ceil() as isize).min(size - 1);
        let lo_c = ((cx - radius - 2.0).floor() as isize).max(0);
        let hi_c = ((cx + radius + 2.0).ceil() as isize).min(size - 1);
        for row in lo_r..=hi_r {
            for col in lo_c..=hi_c {
                let x = col as f64 + 0.5;
                let y = row as f64 + 0.5;
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                let ring = (0.9 * u - (d - radius).abs() + 0.5).clamp(0.0, 1.0) * 0.9;
                let fill = if d < radius { 0.3 } else { 0.0 };
                let hx = cx - 0.35 * radius;
                let hy = cy - 0.35 * radius;
                let dh = ((x - hx).powi(2) + (y - hy).powi(2)).sqrt();
                let spec = (0.6 - dh + 0.5).clamp(0.0, 1.0) * 0.9;
                let a = ring.max(fill).max(spec);
                if a > 0.0 {
                    c.paint(row as usize, col as usize, white, a);
                }
            }
        }
    }
}

fn ruler(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    let edge = Edge::random(r);
    let u = n / 64.0;
    let offset = uniform(r, 0.0, 2.0) * u;
    let band = uniform(r, 6.0, 9.0) * u;
    let spacing = uniform(r, 3.0, 4.5) * u;
    let phase = uniform(r, 0.0, spacing);
    let face = [0.84, 0.84, 0.8];
    let ink = [0.1, 0.1, 0.1];
    let size = c.size();
    for row in 0..size {
        for col in 0..size {
            let (depth, along) = edge.depth_along(col as f64 + 0.5, row as f64 + 0.5, n);
            let inner = depth - offset;
            if !(0.0..band).contains(&inner) {
                continue;
            }
            c.paint(row, col, face, 0.8);
            let k = ((along - phase) / spacing).round();
            let tick_pos = phase + k * spacing;
            let long = (k as i64).rem_euclid(5) == 0;
            let tick_len = if long { band * 0.9 } else { band * 0.5 };
            let on_tick = (along - tick_pos).abs() < 0.5 && inner < tick_len;
            if on_tick {
                c.paint(row, col, ink, 0.95);
            }
        }
    }
}

fn ink(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    let cx = uniform(r, 0.1, 0.9) * n;
    let cy = uniform(r, 0.1, 0.9) * n;
    let radius = uniform(r, 4.0, 7.5) * n / 64.0;
    let alpha = uniform(r, 0.75, 0.92);
    let lobes: Vec<(f64, f64, f64)> = (2..=5)
        .map(|k| (k as f64, uniform(r, 0.0, 0.12), uniform(r, 0.0, 2.0 * PI)))
        .collect();
    let violet = [0.3, 0.08, 0.4];
    let size = c.size();
    for row in 0..size {
        for col in 0..size {
            let dx = col as f64 + 0.5 - cx;
            let dy = row as f64 + 0.5 - cy;
            let d = (dx * dx + dy * dy).sqrt();
            if d > radius * 1.6 + 1.0 {
                continue;
            }
            let theta = dy.atan2(dx);
            let wobble: f64 = lobes.iter().map(|&(k, a, p)| a * (k * theta + p).cos()).sum();
            let edge = radius * (1.0 + wobble);
            let a = (edge - d + 0.5).clamp(0.0, 1.0) * alpha;
            if a > 0.0 {
                c.paint(row, col, violet, a);
            }
        }
    }
}

const PATCH_COLORS: [[f64; 3]; 3] = [[0.95, 0.74, 0.15], [0.18, 0.52, 0.9], [0.3, 0.8, 0.4]];

fn patch(c: &mut Canvas<'_>, r: &mut Rng) {
    let n = c.size() as f64;
    // Anchor on the edge farthest from the lesion.
    let (ly, lx) = match c.mask.bounding_box() {
        Some(b) => (
            (b.row0 + b.row1 + 1) as f64 / 2.0,
            (b.col0 + b.col1 + 1) as f64 / 2.0,
        ),
        None => (n / 2.0, n / 2.0),
    };
    let gaps = [
        (Edge::Top, ly),
        (Edge::Bottom, n - ly),
        (Edge::Left, lx),
        (Edge::Right, n - lx),
    ];
    let best = gaps.iter().map(|g| g.1).fold(f64::MIN, f64::max);
    let candidates: Vec<Edge> = gaps
        .iter()
        .filter(|g| g.1 >= best - 0.5)
        .map(|g| g.0)
        .collect();
    let edge = candidates[int_in(r, 0, candidates.len() - 1)];

    let radius = uniform(r, 5.0, 8.0);
    let depth = uniform(r, 0.2, 0.6) * radius;
    let along = uniform(r, 0.2, 0.8) * n;
    let color = PATCH_COLORS[int_in(r, 0, PATCH_COLORS.len() - 1)];
    let shade = if chance(r, 0.5) { 1.0 } else { 0.9 };
    let (cx, cy) = edge.to_xy(depth, along, n);
    let mut layer = c.layer();
    c.stamp_disc(&mut layer, cx, cy, radius, 1.0);
    c.apply_layer(&layer, color.map(|v| v * shade));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_lesion, Diagnosis, RenderParams};

    fn clean(seed: u64) -> Sample {
        gen_lesion(seed, Diagnosis::Malignant, &RenderParams::default())
    }

    #[test]
    fn sets_only_its_flag() {
        let s = inject_artifact(&clean(3), ArtifactKind::DarkCorner, 1).unwrap();
        let mut expected = [false; 7];
        expected[0] = true;
        assert_eq!(s.artifacts, expected);
    }

    #[test]
    fn duplicate_injection_is_rejected() {
        let s = inject_artifact(&clean(3), ArtifactKind::Ink, 1).unwrap();
        assert!(matches!(
            inject_artifact(&s, ArtifactKind::Ink, 2),
            Err(Error::DuplicateArtifact(ArtifactKind::Ink))
        ));
    }

    #[test]
    fn every_kind_changes_pixels_and_keeps_range() {
        for seed in 0..10 {
            let base = clean(seed);
            for kind in ArtifactKind::ALL {
                let s = inject_artifact(&base, kind, seed * 31 + 5).unwrap();
                assert_ne!(s.image, base.image, "{kind} left no trace (seed {seed})");
                assert_eq!(s.mask, base.mask);
                assert_eq!(s.diagnosis, base.diagnosis);
                s.validate().unwrap();
            }
        }
    }

    #[test]
    fn background_only_kinds_leave_lesion_untouched() {
        for seed in 0..25 {
            let base = clean(seed);
            for kind in ArtifactKind::ALL.into_iter().filter(|k| k.background_only()) {
                let s = inject_artifact(&base, kind, seed).unwrap();
                let n = base.image_size();
                for row in 0..n {
                    for col in 0..n {
                        if s.image.get(row, col) != base.image.get(row, col) {
                            assert!(!base.mask.get(row, col), "{kind} touched the lesion");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn injection_is_deterministic() {
        let base = clean(11);
        for kind in ArtifactKind::ALL {
            assert_eq!(
                inject_artifact(&base, kind, 9).unwrap(),
                inject_artifact(&base, kind, 9).unwrap()
            );
        }
    }
}
