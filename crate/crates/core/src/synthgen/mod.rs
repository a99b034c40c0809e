//! Procedural lesion images with plantable acquisition artifacts.
//!
//! A [`Sample`] is an elliptical lesion blob on a skin-toned background. The
//! diagnosis is carried by the lesion morphology: malignant lesions have more
//! irregular borders, darker pigment and more internal variegation, scaled by
//! `signal_strength`. Any of the seven [`ArtifactKind`]s can then be rendered on
//! top with [`inject_artifact`].
//!
//! Every pixel is snapped to the 8-bit grid after each rendering step, so a
//! dataset written to disk and read back is identical to the generated one.

mod artifacts;
mod dataset;
pub mod io;
mod lesion;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{Image, Mask};

pub use artifacts::inject_artifact;
pub use dataset::{gen_dataset, regenerate, GenConfig};
pub use lesion::{gen_lesion, RenderParams};

/// The seven acquisition artifacts, with a stable `0..7` encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    DarkCorner = 0,
    Hair = 1,
    GelBorder = 2,
    GelBubble = 3,
    Ruler = 4,
    Ink = 5,
    Patch = 6,
}

pub const N_ARTIFACTS: usize = 7;

impl ArtifactKind {
    pub const ALL: [ArtifactKind; N_ARTIFACTS] = [
        ArtifactKind::DarkCorner,
        ArtifactKind::Hair,
        ArtifactKind::GelBorder,
        ArtifactKind::GelBubble,
        ArtifactKind::Ruler,
        ArtifactKind::Ink,
        ArtifactKind::Patch,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ArtifactKind::DarkCorner => "dark_corner",
            ArtifactKind::Hair => "hair",
            ArtifactKind::GelBorder => "gel_border",
            ArtifactKind::GelBubble => "gel_bubble",
            ArtifactKind::Ruler => "ruler",
            ArtifactKind::Ink => "ink",
            ArtifactKind::Patch => "patch",
        }
    }

    /// Artifacts that are only ever drawn on background pixels.
    pub fn background_only(self) -> bool {
        matches!(
            self,
            ArtifactKind::DarkCorner
                | ArtifactKind::Ruler
                | ArtifactKind::GelBorder
                | ArtifactKind::Patch
        )
    }
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArtifactKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown artifact kind '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagnosis {
    Benign,
    Malignant,
}

impl Diagnosis {
    pub fn is_malignant(self) -> bool {
        self == Diagnosis::Malignant
    }

    /// Class index used by the network heads: benign 0, malignant 1.
    pub fn label(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Diagnosis::Benign => "benign",
            Diagnosis::Malignant => "malignant",
        }
    }
}

impl FromStr for Diagnosis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benign" => Ok(Diagnosis::Benign),
            "malignant" => Ok(Diagnosis::Malignant),
            other => Err(Error::InvalidConfig(format!("unknown diagnosis '{other}'"))),
        }
    }
}

/// Presence flags indexed by [`ArtifactKind::index`].
pub type ArtifactFlags = [bool; N_ARTIFACTS];

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub seed: u64,
    pub diagnosis: Diagnosis,
    pub artifacts: ArtifactFlags,
    pub image: Image,
    pub mask: Mask,
}

impl Sample {
    pub fn has(&self, kind: ArtifactKind) -> bool {
        self.artifacts[kind.index()]
    }

    pub fn image_size(&self) -> usize {
        self.image.height()
    }

    /// Checks the structural invariants: matching dims, value range and a mask
    /// with both foreground and background.
    pub fn validate(&self) -> Result<()> {
        if self.image.dims() != self.mask.dims() {
            return Err(Error::DimensionMismatch(format!(
                "image {:?} vs mask {:?}",
                self.image.dims(),
                self.mask.dims()
            )));
        }
        if self
            .image
            .as_slice()
            .iter()
            .any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidConfig(format!(
                "sample {} has pixel values outside [0, 1]",
                self.id
            )));
        }
        let fg = self.mask.foreground_count();
        if fg == 0 || fg == self.mask.as_slice().len() {
            return Err(Error::InvalidConfig(format!(
                "sample {} mask lacks foreground or background",
                self.id
            )));
        }
        Ok(())
    }
}
