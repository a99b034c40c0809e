//! Occlusion modes and background normalization on one sample; writes the
//! variants as PNGs.
//!
//! cargo run --release --example occlusion_and_normalization -- [out_dir]

use std::path::PathBuf;

use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};
use lesion_debias::transforms::{normalize_background, occlude, occlusion_box, pixel_average, OcclusionMode};

fn main() -> lesion_debias::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lesion_occlusion"));
    std::fs::create_dir_all(&out)?;

    let pool = gen_dataset(&GenConfig::new(100, 6).with_prevalence(ArtifactKind::GelBorder, 0.5))?;
    let sample = pool.iter().find(|s| s.has(ArtifactKind::GelBorder)).expect("no gel border in pool");
    let area = (sample.image_size() * sample.image_size()) as f64;

    for mode in OcclusionMode::ALL {
        let covered = occlusion_box(&sample.mask, mode).map_or(0.0, |b| b.area() as f64 / area);
        let img = occlude(sample, mode);
        img.image.save_png(&out.join(format!("{}.png", mode.name())))?;
        println!("{:<12} box covers {:.1}% of the image", mode.name(), 100.0 * covered);
    }

    let mean = pixel_average(&pool)?;
    let normalized = normalize_background(sample, &mean)?;
    normalized.image.save_png(&out.join("normalized.png"))?;
    let untouched = sample.mask.as_slice().iter().enumerate().filter(|(_, &m)| m).all(|(i, _)| {
        let (r, c) = (i / sample.image_size(), i % sample.image_size());
        normalized.image.get(r, c) == sample.image.get(r, c)
    });
    println!("lesion pixels unchanged by normalization: {untouched}");
    println!("images in {}", out.display());
    Ok(())
}
