//! RGB <-> HSV with hue in `[0, 1)`.

pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    [h, s, v]
}

pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    if s == 0.0 {
        return [v, v, v];
    }
    let h6 = h.rem_euclid(1.0) * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u8 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Rotate hue by `shift`, a fraction of the full circle.
pub fn shift_hue(rgb: [f64; 3], shift: f64) -> [f64; 3] {
    let [h, s, v] = rgb_to_hsv(rgb);
    if s == 0.0 {
        return rgb;
    }
    hsv_to_rgb([(h + shift).rem_euclid(1.0), s, v]).map(|c| c.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for rgb in [
            [0.8, 0.6, 0.5],
            [0.1, 0.9, 0.3],
            [0.2, 0.3, 0.95],
            [1.0, 0.0, 0.0],
            [0.5, 0.5, 0.5],
        ] {
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for c in 0..3 {
                assert!((back[c] - rgb[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gray_is_hue_invariant() {
        for g in [0.0, 0.25, 0.6, 1.0] {
            assert_eq!(shift_hue([g, g, g], 0.17), [g, g, g]);
        }
    }

    #[test]
    fn third_turn_permutes_primaries() {
        let out = shift_hue([1.0, 0.0, 0.0], 1.0 / 3.0);
        assert!((out[1] - 1.0).abs() < 1e-12 && out[0].abs() < 1e-12);
    }
}
