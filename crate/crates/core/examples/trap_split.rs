//! Cut train/test splits whose artifact correlation flips sign, then audit
//! them against the pool.

use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};
use lesion_debias::trapset::{sample_trap, target_table, verify_trap, TrapSpec};

fn main() -> lesion_debias::Result<()> {
    let pool = gen_dataset(&GenConfig::new(1000, 4).with_prevalence(ArtifactKind::Ink, 0.5))?;
    for c in [0.2, 0.5, 0.8] {
        let spec = TrapSpec {
            artifact: ArtifactKind::Ink,
            ..TrapSpec::new(c, 300, 300, 9)
        };
        let t = target_table(300, spec.class_balance, c);
        let split = sample_trap(&pool, &spec)?;
        let report = verify_trap(&split, &pool)?;
        println!(
            "c={c:.1}  train cells [{} {} {} {}]  phi train {:+.3} test {:+.3}  verified: {}",
            t.a, t.b, t.c, t.d, report.train_corr, report.test_corr, report.passed
        );
    }

    // Asking for more than the pool holds is a reported error, not a panic.
    let greedy = TrapSpec {
        artifact: ArtifactKind::Ink,
        ..TrapSpec::new(1.0, 600, 600, 9)
    };
    if let Err(e) = sample_trap(&pool, &greedy) {
        println!("rejected: {e}");
    }
    Ok(())
}
