//! On-disk dataset layout.
//!
//! ```text
//! <dir>/manifest.csv       # '#'-prefixed header lines, then one row per sample
//! <dir>/images/<id>.png    # RGB, 8 bits per channel
//! <dir>/masks/<id>.png     # grayscale, 0 = background, 255 = lesion
//! ```
//!
//! Manifest columns, in order: `id, diagnosis, dark_corner, hair, gel_border,
//! gel_bubble, ruler, ink, patch, seed`. The header carries the tool version,
//! a transform tag and the resolved generation config as JSON.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ArtifactKind, Diagnosis, Sample, N_ARTIFACTS};
use crate::error::{Error, Result};
use crate::raster::{Image, Mask};

pub const MANIFEST: &str = "manifest.csv";
pub const TOOL_VERSION: &str = concat!("lesion-debias ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: String,
    /// `traditional`, an occlusion mode, or `normalized+<mode>`.
    pub transform: String,
    pub config: serde_json::Value,
}

impl DatasetHeader {
    pub fn new(transform: impl Into<String>, config: serde_json::Value) -> Self {
        Self {
            version: TOOL_VERSION.to_string(),
            transform: transform.into(),
            config,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: u64,
    diagnosis: String,
    dark_corner: u8,
    hair: u8,
    gel_border: u8,
    gel_bubble: u8,
    ruler: u8,
    ink: u8,
    patch: u8,
    seed: u64,
}

impl ManifestRow {
    fn from_sample(s: &Sample) -> Self {
        let f = |k: ArtifactKind| u8::from(s.has(k));
        Self {
            id: s.id,
            diagnosis: s.diagnosis.name().to_string(),
            dark_corner: f(ArtifactKind::DarkCorner),
            hair: f(ArtifactKind::Hair),
            gel_border: f(ArtifactKind::GelBorder),
            gel_bubble: f(ArtifactKind::GelBubble),
            ruler: f(ArtifactKind::Ruler),
            ink: f(ArtifactKind::Ink),
            patch: f(ArtifactKind::Patch),
            seed: s.seed,
        }
    }

    fn flags(&self) -> [u8; N_ARTIFACTS] {
        [
            self.dark_corner,
            self.hair,
            self.gel_border,
            self.gel_bubble,
            self.ruler,
            self.ink,
            self.patch,
        ]
    }
}

/// Manifest metadata of one sample, without its rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: u64,
    pub diagnosis: Diagnosis,
    pub artifacts: [bool; N_ARTIFACTS],
    pub seed: u64,
}

fn image_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("images").join(format!("{id:06}.png"))
}

fn mask_path(dir: &Path, id: u64) -> PathBuf {
    dir.join("masks").join(format!("{id:06}.png"))
}

pub fn write_dataset(dir: &Path, samples: &[Sample], header: &DatasetHeader) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("masks"))?;

    let mut buf = Vec::new();
    writeln!(buf, "# version: {}", header.version)?;
    writeln!(buf, "# transform: {}", header.transform)?;
    writeln!(buf, "# config: {}", serde_json::to_string(&header.config)?)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for s in samples {
            w.serialize(ManifestRow::from_sample(s))?;
        }
        w.flush()?;
    }
    fs::write(dir.join(MANIFEST), buf)?;

    for s in samples {
        s.image.save_png(&image_path(dir, s.id))?;
        s.mask.save_png(&mask_path(dir, s.id))?;
    }
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<(DatasetHeader, Vec<ManifestEntry>)> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    let mut version = None;
    let mut transform = None;
    let mut config = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix("version: ") {
                version = Some(v.to_string());
            } else if let Some(v) = rest.strip_prefix("transform: ") {
                transform = Some(v.to_string());
            } else if let Some(v) = rest.strip_prefix("config: ") {
                config = Some(serde_json::from_str(v)?);
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }
    let header = DatasetHeader {
        version: version.ok_or_else(|| Error::format(&path, "missing version header"))?,
        transform: transform.ok_or_else(|| Error::format(&path, "missing transform header"))?,
        config: config.unwrap_or(serde_json::Value::Null),
    };

    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let expected = [
        "id",
        "diagnosis",
        "dark_corner",
        "hair",
        "gel_border",
        "gel_bubble",
        "ruler",
        "ink",
        "patch",
        "seed",
    ];
    let cols: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if cols != expected {
        return Err(Error::format(&path, format!("unexpected columns {cols:?}")));
    }
    let mut entries = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        let mut artifacts = [false; N_ARTIFACTS];
        for (slot, v) in artifacts.iter_mut().zip(row.flags()) {
            *slot = match v {
                0 => false,
                1 => true,
                other => {
                    return Err(Error::format(&path, format!("flag value {other} on id {}", row.id)))
                }
            };
        }
        entries.push(ManifestEntry {
            id: row.id,
            diagnosis: row.diagnosis.parse()?,
            artifacts,
            seed: row.seed,
        });
    }
    Ok((header, entries))
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetHeader, Vec<Sample>)> {
    let (header, entries) = read_manifest(dir)?;
    let samples = entries
        .into_iter()
        .map(|e| {
            let image = Image::load_png(&image_path(dir, e.id))?;
            let mask = Mask::load_png(&mask_path(dir, e.id))?;
            Ok(Sample {
                id: e.id,
                seed: e.seed,
                diagnosis: e.diagnosis,
                artifacts: e.artifacts,
                image,
                mask,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, samples))
}

/// Hex SHA-256 of the manifest file.
pub fn manifest_checksum(dir: &Path) -> Result<String> {
    let bytes = fs::read(dir.join(MANIFEST))?;
    Ok(hex_digest(&bytes))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_dataset, GenConfig};

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = GenConfig::new(12, 5)
            .with_prevalence(ArtifactKind::Hair, 0.5)
            .with_prevalence(ArtifactKind::Patch, 0.5);
        cfg.image_size = 24;
        let data = gen_dataset(&cfg).unwrap();
        let header = DatasetHeader::new("traditional", serde_json::to_value(&cfg).unwrap());
        write_dataset(dir.path(), &data, &header).unwrap();
        let (h, back) = read_dataset(dir.path()).unwrap();
        assert_eq!(h, header);
        assert_eq!(back, data);
    }

    #[test]
    fn manifest_columns_are_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = GenConfig::new(2, 1);
        cfg.image_size = 16;
        let data = gen_dataset(&cfg).unwrap();
        write_dataset(dir.path(), &data, &DatasetHeader::new("traditional", serde_json::Value::Null))
            .unwrap();
        let text = fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
        let header_row = text.lines().find(|l| !l.starts_with('#')).unwrap();
        assert_eq!(
            header_row,
            "id,diagnosis,dark_corner,hair,gel_border,gel_bubble,ruler,ink,patch,seed"
        );
    }
}
