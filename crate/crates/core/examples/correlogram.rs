//! Rank correlations between diagnosis and artifact presence, before and
//! after planting a dark-corner shortcut.

use lesion_debias::stats::{correlogram, variable_index, VARIABLES};
use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};
use lesion_debias::trapset::{sample_trap, TrapSpec};

fn main() -> lesion_debias::Result<()> {
    let mut gen = GenConfig::new(600, 2).with_prevalence(ArtifactKind::DarkCorner, 0.5);
    gen.artifact_prevalence[1..].fill(0.2);
    let pool = gen_dataset(&gen)?;
    let split = sample_trap(&pool, &TrapSpec::new(0.7, 200, 200, 0))?;
    let train: Vec<_> = split.train.iter().map(|&id| pool[id as usize].clone()).collect();

    let diagnosis = VARIABLES.len() - 1;
    for (name, set) in [("pool", &pool[..]), ("trapped train", &train[..])] {
        let c = correlogram(set)?;
        println!("{name} (n = {}):", c.n);
        for kind in ArtifactKind::ALL {
            let i = variable_index(kind);
            let rho = c.rho[i][diagnosis].map_or("NA".into(), |r| format!("{r:+.3}"));
            let mark = if c.is_significant(i, diagnosis) { "*" } else { "" };
            println!("  diagnosis ~ {:<12} {rho}{mark}", kind.name());
        }
    }
    println!("\nfull table of the trapped set:\n{}", correlogram(&train)?.to_text());
    Ok(())
}
