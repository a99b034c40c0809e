use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{BoundingBox, Mask};
use crate::synthgen::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionMode {
    /// No occlusion.
    #[default]
    Traditional,
    /// Lesion pixels blacked out, background kept.
    SkinOnly,
    /// Lesion bounding box blacked out.
    Bbox,
    /// Black box covering at least 70% of the image.
    Bbox70,
    /// Black box covering at least 90% of the image.
    Bbox90,
}

impl OcclusionMode {
    pub const ALL: [OcclusionMode; 5] = [
        OcclusionMode::Traditional,
        OcclusionMode::SkinOnly,
        OcclusionMode::Bbox,
        OcclusionMode::Bbox70,
        OcclusionMode::Bbox90,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OcclusionMode::Traditional => "traditional",
            OcclusionMode::SkinOnly => "skin_only",
            OcclusionMode::Bbox => "bbox",
            OcclusionMode::Bbox70 => "bbox70",
            OcclusionMode::Bbox90 => "bbox90",
        }
    }

    fn coverage_percent(self) -> Option<usize> {
        match self {
            OcclusionMode::Bbox70 => Some(70),
            OcclusionMode::Bbox90 => Some(90),
            _ => None,
        }
    }
}

impl fmt::Display for OcclusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OcclusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown occlusion mode '{s}'")))
    }
}

/// The black box a box-type mode paints, or `None` for `traditional` and
/// `skin_only`.
///
/// `bbox70`/`bbox90` start from the lesion box and move every side that is
/// not yet at the image border outwards by one pixel per step until the area
/// threshold is reached, so the boxes are nested.
pub fn occlusion_box(mask: &Mask, mode: OcclusionMode) -> Option<BoundingBox> {
    let (h, w) = mask.dims();
    let lesion = mask.bounding_box();
    match mode {
        OcclusionMode::Traditional | OcclusionMode::SkinOnly => None,
        OcclusionMode::Bbox => lesion,
        OcclusionMode::Bbox70 | OcclusionMode::Bbox90 => {
            let pct = mode.coverage_percent().expect("box mode");
            let mut b = lesion.unwrap_or(BoundingBox {
                row0: h / 2,
                col0: w / 2,
                row1: h / 2,
                col1: w / 2,
            });
            while b.area() * 100 < pct * h * w {
                if b.row0 > 0 {
                    b.row0 -= 1;
                }
                if b.row1 + 1 < h {
                    b.row1 += 1;
                }
                if b.col0 > 0 {
                    b.col0 -= 1;
                }
                if b.col1 + 1 < w {
                    b.col1 += 1;
                }
            }
            Some(b)
        }
    }
}

pub fn occlude(sample: &Sample, mode: OcclusionMode) -> Sample {
    let mut out = sample.clone();
    let (h, w) = sample.image.dims();
    match mode {
        OcclusionMode::Traditional => {}
        OcclusionMode::SkinOnly => {
            for row in 0..h {
                for col in 0..w {
                    if sample.mask.get(row, col) {
                        out.image.set(row, col, [0.0; 3]);
                    }
                }
            }
        }
        _ => {
            if let Some(b) = occlusion_box(&sample.mask, mode) {
                for row in b.row0..=b.row1 {
                    for col in b.col0..=b.col1 {
                        out.image.set(row, col, [0.0; 3]);
                    }
                }
            }
        }
    }
    out
}
