//! Generate a small pool, write it to disk and save a contact sheet of
//! every artifact kind.
//!
//! cargo run --release --example generate_dataset -- [out_dir]

use std::path::PathBuf;

use lesion_debias::raster::Image;
use lesion_debias::synthgen::io::{manifest_checksum, write_dataset, DatasetHeader};
use lesion_debias::synthgen::{gen_dataset, gen_lesion, inject_artifact, ArtifactKind, Diagnosis, GenConfig, RenderParams};

fn main() -> lesion_debias::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("lesion_pool"));

    let mut config = GenConfig::new(200, 11);
    config.artifact_prevalence = [0.25; 7];
    let pool = gen_dataset(&config)?;
    for kind in ArtifactKind::ALL {
        let n = pool.iter().filter(|s| s.has(kind)).count();
        println!("{:<12} {n:>4} / {}", kind.name(), pool.len());
    }
    let header = DatasetHeader::new("none", serde_json::to_value(&config).unwrap());
    write_dataset(&out, &pool, &header)?;
    println!("pool written to {} (checksum {})", out.display(), manifest_checksum(&out)?);

    // One column per artifact, benign on top and malignant below.
    let params = RenderParams::default();
    let n = params.image_size;
    let mut sheet = Image::new(2 * n, 8 * n);
    for (row, diagnosis) in [Diagnosis::Benign, Diagnosis::Malignant].into_iter().enumerate() {
        let clean = gen_lesion(row as u64, diagnosis, &params);
        let tiles = std::iter::once(Ok(clean.clone()))
            .chain(ArtifactKind::ALL.iter().map(|&k| inject_artifact(&clean, k, 5)));
        for (col, tile) in tiles.enumerate() {
            let tile = tile?;
            for y in 0..n {
                for x in 0..n {
                    sheet.set(row * n + y, col * n + x, tile.image.get(y, x));
                }
            }
        }
    }
    let sheet_path = out.join("contact_sheet.png");
    sheet.save_png(&sheet_path)?;
    println!("contact sheet: {}", sheet_path.display());
    Ok(())
}
