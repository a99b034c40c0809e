//! Train a detector for one artifact kind and report its validation AUC.
//!
//! cargo run --release --example artifact_classifier -- [kind]

use lesion_debias::lntl::train_artifact_classifier;
use lesion_debias::nncore::TrainConfig;
use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};

fn main() -> lesion_debias::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "ruler".into());
    let kind = ArtifactKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .unwrap_or_else(|| panic!("unknown artifact {name}"));

    let mut gen = GenConfig::new(400, 21).with_prevalence(kind, 0.5);
    gen.image_size = 32;
    let pool = gen_dataset(&gen)?;
    let (train, val) = pool.split_at(300);
    // Random crops can cut edge artifacts away, so train on raw images.
    let config = TrainConfig {
        lr0: 0.05,
        pretrain_epochs: 10,
        lr_drop_epoch: 7,
        augment: false,
        ..TrainConfig::default()
    };
    let (_, result) = train_artifact_classifier(kind, train, val, &config)?;
    println!("{} detector: AUC {:.3} on {} validation samples", kind.name(), result.value, val.len());
    Ok(())
}
