//! Pretrain on a trapped split, unlearn the artifact through gradient
//! reversal, and compare both networks on the anti-correlated test set.
//! Small images keep this under a minute.

use lesion_debias::eval::evaluate;
use lesion_debias::lntl::{init_network, pretrain, probe_auc, unlearn, validation_split};
use lesion_debias::nncore::TrainConfig;
use lesion_debias::synthgen::{gen_dataset, ArtifactKind, GenConfig};
use lesion_debias::trapset::{sample_trap, TrapSpec};

fn main() -> lesion_debias::Result<()> {
    let kind = ArtifactKind::DarkCorner;
    let mut gen = GenConfig::new(500, 7).with_prevalence(kind, 0.5);
    gen.image_size = 32;
    gen.signal_strength = 0.6;
    let pool = gen_dataset(&gen)?;
    let split = sample_trap(&pool, &TrapSpec::new(0.8, 160, 160, 1))?;
    let pick = |ids: &[u64]| ids.iter().map(|&i| pool[i as usize].clone()).collect::<Vec<_>>();
    let (train, test) = (pick(&split.train), pick(&split.test));

    let config = TrainConfig {
        lr0: 0.05,
        pretrain_epochs: 8,
        unlearn_epochs: 8,
        lr_drop_epoch: 4,
        grad_clip: Some(1.0),
        seed: 1,
        ..TrainConfig::default()
    };
    let (fit, val) = validation_split(&train, config.val_fraction, kind, config.seed);
    let net = init_network(&fit, &config)?;
    let (baseline, log) = pretrain(net, &fit, &val, &config)?;
    println!("pretrain: {} epochs, final val loss {:.3}", log.records.len(), log.records.last().unwrap().val_loss);
    let (debiased, log) = unlearn(baseline.clone(), &fit, &val, &config)?;
    println!("unlearn:  {} epochs, final val loss {:.3}", log.records.len(), log.records.last().unwrap().val_loss);

    let report = evaluate(&[baseline.clone(), debiased.clone()], &test, 8, &config.policy, 3)?;
    println!("trap test AUC  baseline {:.3}  unlearned {:.3}", report.aucs[0], report.aucs[1]);
    println!(
        "artifact probe AUC  baseline {:.3}  unlearned {:.3}",
        probe_auc(&baseline, &fit, &test, kind)?,
        probe_auc(&debiased, &fit, &test, kind)?
    );
    Ok(())
}
