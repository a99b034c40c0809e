//! RGB images and binary masks.
//!
//! Images are stored row-major, channel-interleaved (`H×W×3`) in `f64` with
//! values in `[0, 1]`. On disk they are 8-bit PNGs; [`Image::quantize`] snaps an
//! image onto the 8-bit grid so that a save/load round trip is exact.

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self::filled(height, width, [0.0; 3])
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for _ in 0..height * width {
            data.extend_from_slice(&rgb);
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Round every channel to the nearest multiple of 1/255.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            *v = f64::from(to_u8(*v)) / 255.0;
        }
    }

    /// Alpha-blend `rgb` over the pixel with opacity `alpha`, clamped to `[0, 1]`.
    #[inline]
    pub fn blend(&mut self, row: usize, col: usize, rgb: [f64; 3], alpha: f64) {
        let a = alpha.clamp(0.0, 1.0);
        if a == 0.0 {
            return;
        }
        let i = (row * self.width + col) * 3;
        for c in 0..3 {
            let v = self.data[i + c] * (1.0 - a) + rgb[c] * a;
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Convert to a planar `3×H×W` buffer, the layout the network consumes.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut out = vec![0.0; 3 * n];
        for p in 0..n {
            for c in 0..3 {
                out[c * n + p] = self.data[p * 3 + c];
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (i, px) in img.pixels_mut().enumerate() {
            px.0 = [
                to_u8(self.data[i * 3]),
                to_u8(self.data[i * 3 + 1]),
                to_u8(self.data[i * 3 + 2]),
            ];
        }
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img
            .into_raw()
            .into_iter()
            .map(|b| f64::from(b) / 255.0)
            .collect();
        Self::from_vec(h as usize, w as usize, data)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary lesion mask; `true` marks lesion foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / self.data.len() as f64
    }

    /// Inclusive `(row0, col0, row1, col1)` bounding box of the foreground.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut bb: Option<BoundingBox> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    bb = Some(match bb {
                        None => BoundingBox {
                            row0: r,
                            col0: c,
                            row1: r,
                            col1: c,
                        },
                        Some(b) => BoundingBox {
                            row0: b.row0.min(r),
                            col0: b.col0.min(c),
                            row1: b.row1.max(r),
                            col1: b.col1.max(c),
                        },
                    });
                }
            }
        }
        bb
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let raw = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        let img = GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("mask buffer matches its dimensions");
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(Self {
            height: h as usize,
            width: w as usize,
            data: img.into_raw().into_iter().map(|b| b >= 128).collect(),
        })
    }
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl BoundingBox {
    pub fn area(&self) -> usize {
        (self.row1 - self.row0 + 1) * (self.col1 - self.col0 + 1)
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row <= self.row1 && col >= self.col0 && col <= self.col1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantized_png_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(5, 7);
        for (i, v) in img.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 * 0.0137) % 1.0;
        }
        img.quantize();
        let path = dir.path().join("x.png");
        img.save_png(&path).unwrap();
        assert_eq!(Image::load_png(&path).unwrap(), img);

        let mut mask = Mask::new(5, 7);
        mask.set(2, 3, true);
        let mpath = dir.path().join("m.png");
        mask.save_png(&mpath).unwrap();
        assert_eq!(Mask::load_png(&mpath).unwrap(), mask);
    }

    #[test]
    fn bounding_box_is_tight() {
        let mut m = Mask::new(10, 10);
        assert!(m.bounding_box().is_none());
        m.set(2, 7, true);
        m.set(5, 3, true);
        let bb = m.bounding_box().unwrap();
        assert_eq!(
            bb,
            BoundingBox {
                row0: 2,
                col0: 3,
                row1: 5,
                col1: 7
            }
        );
        assert_eq!(bb.area(), 4 * 5);
    }

    #[test]
    fn planar_layout() {
        let mut img = Image::new(1, 2);
        img.set(0, 0, [0.1, 0.2, 0.3]);
        img.set(0, 1, [0.4, 0.5, 0.6]);
        assert_eq!(img.to_planar(), vec![0.1, 0.4, 0.2, 0.5, 0.3, 0.6]);
    }
}
