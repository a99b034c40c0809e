//! Nearest neighbours in extractor feature space, written as a CSV grid.
//! Neighbours sharing the query's artifact hint at what the features encode.

use lesion_debias::eval::{retrieval_grid, write_retrieval};
use lesion_debias::lntl::{init_network, pretrain, validation_split};
use lesion_debias::nncore::TrainConfig;
use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};

fn main() -> lesion_debias::Result<()> {
    let kind = ArtifactKind::GelBubble;
    let mut gen = GenConfig::new(300, 13).with_prevalence(kind, 0.5);
    gen.image_size = 32;
    let pool = gen_dataset(&gen)?;
    let (train, gallery) = pool.split_at(200);

    let config = TrainConfig {
        pretrain_epochs: 5,
        lr_drop_epoch: 3,
        ..TrainConfig::default()
    };
    let (fit, val) = validation_split(train, 0.1, kind, 0);
    let (net, _) = pretrain(init_network(&fit, &config)?, &fit, &val, &config)?;

    let mut grids = Vec::new();
    for query in gallery.iter().take(5) {
        let grid = retrieval_grid(&net, query, gallery, 6)?;
        // The query itself is in the gallery and comes first.
        let shared = grid.ranked[1..]
            .iter()
            .filter(|(id, _)| pool[*id as usize].has(kind) == query.has(kind))
            .count();
        println!(
            "query {:>3} ({}, {}): {shared}/5 neighbours agree on {}",
            query.id,
            query.diagnosis.name(),
            if query.has(kind) { "bubbles" } else { "clean" },
            kind.name()
        );
        grids.push(grid);
    }
    let path = std::env::temp_dir().join("retrieval.csv");
    write_retrieval(&path, &grids)?;
    println!("grid written to {}", path.display());
    Ok(())
}
