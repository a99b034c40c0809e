//! Two-phase Learn-Not-To-Learn training.
//!
//! Pretraining fits the extractor and main head on the diagnosis. Unlearning
//! then trains one linear head per artifact on the pooled extractor features
//! while the gradient those heads send back into the extractor is reversed and
//! scaled by `lambda`, so the extractor is pushed to forget the artifacts.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{
    clip_grad_norm, cross_entropy, lr_at, softmax2, Batch, Checkpoint, Group, InputNorm, LossSpec, Network, Sgd,
    TrainConfig,
};
use crate::rng;
use crate::stats::{auc, AucResult};
use crate::synthgen::{ArtifactKind, Sample, N_ARTIFACTS};
use crate::transforms::augment;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    /// Extractor and main head on the diagnosis; best validation loss wins.
    Pretrain,
    /// Main loss plus reversed bias-head losses; the final epoch wins.
    Unlearn,
    /// Extractor and main head on one artifact flag; best validation loss wins.
    Classifier(ArtifactKind),
}

impl PhaseKind {
    pub fn name(self) -> &'static str {
        match self {
            PhaseKind::Pretrain => "pretrain",
            PhaseKind::Unlearn => "unlearn",
            PhaseKind::Classifier(_) => "classifier",
        }
    }

    fn target(self, s: &Sample) -> usize {
        match self {
            PhaseKind::Classifier(kind) => s.has(kind) as usize,
            _ => s.diagnosis.label(),
        }
    }

    fn keeps_best(self) -> bool {
        !matches!(self, PhaseKind::Unlearn)
    }
}

/// One completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Main-head AUC on the validation set.
    pub main_auc: Option<f64>,
    /// Training AUC of each bias head against its artifact flag (unlearning only).
    pub bias_auc: [Option<f64>; N_ARTIFACTS],
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseLog {
    pub records: Vec<EpochRecord>,
}

impl PhaseLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Append one record as a line.
    pub fn append_record(path: &Path, record: &EpochRecord) -> Result<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(record)?)?;
        Ok(())
    }
}

/// Fresh network sized for `train`, with input statistics taken from it.
pub fn init_network(train: &[Sample], config: &TrainConfig) -> Result<Network> {
    let first = train.first().ok_or(Error::Empty("training set"))?;
    let (h, w) = first.image.dims();
    if h != w {
        return Err(Error::DimensionMismatch(format!("images must be square, got {h}x{w}")));
    }
    let mut net = Network::new(h, config.channels, config.lambda, config.seed)?;
    net.norm = InputNorm::from_samples(train);
    Ok(net)
}

/// Hold out `fraction` of each (diagnosis, `trapped` flag) stratum.
pub fn validation_split(
    samples: &[Sample],
    fraction: f64,
    trapped: ArtifactKind,
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>) {
    let mut strata: [Vec<&Sample>; 4] = Default::default();
    for s in samples {
        strata[(s.diagnosis.label() << 1) | s.has(trapped) as usize].push(s);
    }
    let mut r = rng::seeded(rng::derive(seed, rng::tag("validation")));
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for stratum in &mut strata {
        stratum.sort_by_key(|s| s.id);
        stratum.shuffle(&mut r);
        let k = (stratum.len() as f64 * fraction).round() as usize;
        val.extend(stratum[..k].iter().map(|s| (*s).clone()));
        train.extend(stratum[k..].iter().map(|s| (*s).clone()));
    }
    train.sort_by_key(|s| s.id);
    val.sort_by_key(|s| s.id);
    (train, val)
}

fn require_both(labels: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    let mut seen = [false; 2];
    for l in labels {
        seen[l.min(1)] = true;
    }
    if seen[0] && seen[1] {
        Ok(())
    } else {
        Err(Error::SingleClass(what.to_string()))
    }
}

fn auc_or_none(scores: &[f64], labels: &[bool]) -> Option<f64> {
    auc(scores, labels).ok().map(|a| a.value)
}

/// A phase in progress; can be checkpointed after any epoch and resumed.
#[derive(Debug, Clone)]
pub struct Phase {
    pub kind: PhaseKind,
    pub net: Network,
    pub sgd: Sgd,
    /// Completed epochs.
    pub epoch: usize,
    pub best: Option<(f64, Network)>,
    pub log: PhaseLog,
}

impl Phase {
    pub fn start(kind: PhaseKind, mut net: Network, config: &TrainConfig) -> Self {
        if kind == PhaseKind::Unlearn {
            net.lambda = config.lambda;
        }
        let sgd = Sgd::new(&net.params, config.momentum, config.weight_decay);
        Self {
            kind,
            net,
            sgd,
            epoch: 0,
            best: None,
            log: PhaseLog::default(),
        }
    }

    /// Continue from a checkpoint written by [`Phase::checkpoint`], the log
    /// up to that epoch and, for best-keeping phases, the best network so far.
    pub fn resume(kind: PhaseKind, ckpt: Checkpoint, best: Option<Network>, log: PhaseLog) -> Result<Self> {
        if ckpt.phase != kind.name() || log.records.len() != ckpt.epoch {
            return Err(Error::InvalidConfig(format!(
                "checkpoint is {} epoch {} but log has {} records for {}",
                ckpt.phase,
                ckpt.epoch,
                log.records.len(),
                kind.name()
            )));
        }
        let mut sgd = Sgd::new(&ckpt.net.params, ckpt.config.momentum, ckpt.config.weight_decay);
        if let Some(v) = ckpt.velocity {
            sgd.velocity = v;
        }
        let best_loss = log.records.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        Ok(Self {
            kind,
            net: ckpt.net,
            sgd,
            epoch: ckpt.epoch,
            best: best.map(|n| (best_loss, n)),
            log,
        })
    }

    pub fn total_epochs(&self, config: &TrainConfig) -> usize {
        match self.kind {
            PhaseKind::Unlearn => config.unlearn_epochs,
            _ => config.pretrain_epochs,
        }
    }

    pub fn is_done(&self, config: &TrainConfig) -> bool {
        self.epoch >= self.total_epochs(config)
    }

    pub fn checkpoint(&self, config: &TrainConfig) -> Checkpoint {
        Checkpoint {
            net: self.net.clone(),
            config: config.clone(),
            phase: self.kind.name().to_string(),
            epoch: self.epoch,
            velocity: Some(self.sgd.velocity.clone()),
        }
    }

    fn loss_spec(&self, config: &TrainConfig) -> LossSpec {
        match self.kind {
            PhaseKind::Unlearn => LossSpec::unlearn(config.lambda, config.bias_head_mask),
            _ => LossSpec::main_only(),
        }
    }

    fn batch(&self, samples: &[&Sample], config: &TrainConfig, epoch_seed: u64) -> Batch {
        let mut b = if config.augment {
            let aug: Vec<Sample> = samples
                .iter()
                .map(|s| augment(s, &config.policy, rng::derive(epoch_seed, s.id)))
                .collect();
            Batch::from_samples(&aug)
        } else {
            Batch::from_samples(samples.iter().copied())
        };
        b.labels = samples.iter().map(|s| self.kind.target(s)).collect();
        b
    }

    /// Validation loss and main-head AUC without augmentation.
    fn validate(&self, val: &[Sample]) -> Result<(f64, Option<f64>)> {
        let mut logits = Vec::with_capacity(val.len());
        for chunk in val.chunks(64) {
            let mut b = Batch::from_samples(chunk);
            b.labels = chunk.iter().map(|s| self.kind.target(s)).collect();
            logits.extend(self.net.forward(&b)?.main_logits);
        }
        let labels: Vec<usize> = val.iter().map(|s| self.kind.target(s)).collect();
        let (loss, _) = cross_entropy(&logits, &labels)?;
        let scores: Vec<f64> = logits.iter().map(|l| softmax2(*l)[1]).collect();
        let flags: Vec<bool> = labels.iter().map(|&l| l == 1).collect();
        Ok((loss, auc_or_none(&scores, &flags)))
    }

    pub fn run_epoch(&mut self, train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<EpochRecord> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Empty("training and validation sets"));
        }
        let lr = lr_at(self.epoch, config);
        let phase_seed = rng::derive(config.seed, rng::tag(self.kind.name()));
        let epoch_seed = rng::derive(phase_seed, self.epoch as u64);
        let mut order: Vec<&Sample> = train.iter().collect();
        order.shuffle(&mut rng::seeded(epoch_seed));

        let spec = self.loss_spec(config);
        let mut loss_sum = 0.0;
        let mut bias_scores: Vec<Vec<f64>> = vec![Vec::new(); N_ARTIFACTS];
        let mut bias_flags: Vec<Vec<bool>> = vec![Vec::new(); N_ARTIFACTS];
        for chunk in order.chunks(config.batch_size) {
            let batch = self.batch(chunk, config, epoch_seed);
            let (mut grads, losses, out) = self.net.backprop(&batch, &spec)?;
            if let Some(max) = config.grad_clip {
                clip_grad_norm(&mut grads, max);
            }
            let total = losses.total(&spec);
            if !total.is_finite() {
                return Err(Error::Diverged {
                    phase: self.kind.name().to_string(),
                    epoch: self.epoch,
                });
            }
            loss_sum += total * chunk.len() as f64;
            let kind = self.kind;
            // Bias heads only move while unlearning, and only when enabled.
            self.sgd.step(&mut self.net.params, &grads, lr, |g| match g {
                Group::Extractor | Group::MainHead => true,
                Group::BiasHead(k) => kind == PhaseKind::Unlearn && config.bias_head_mask[k],
            })?;
            if self.kind == PhaseKind::Unlearn {
                for (i, s) in chunk.iter().enumerate() {
                    for k in 0..N_ARTIFACTS {
                        bias_scores[k].push(softmax2(out.bias_logits[i][k])[1]);
                        bias_flags[k].push(s.artifacts[k]);
                    }
                }
            }
        }
        let (val_loss, main_auc) = self.validate(val)?;
        let mut bias_auc = [None; N_ARTIFACTS];
        if self.kind == PhaseKind::Unlearn {
            for k in 0..N_ARTIFACTS {
                bias_auc[k] = auc_or_none(&bias_scores[k], &bias_flags[k]);
            }
        }
        let record = EpochRecord {
            phase: self.kind.name().to_string(),
            epoch: self.epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            main_auc,
            bias_auc,
            lr,
        };
        self.epoch += 1;
        if self.kind.keeps_best() && self.best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            self.best = Some((val_loss, self.net.clone()));
        }
        self.log.records.push(record.clone());
        Ok(record)
    }

    /// Best-validation network for best-keeping phases, otherwise the last one.
    pub fn finish(self) -> (Network, PhaseLog) {
        let net = match (self.kind.keeps_best(), self.best) {
            (true, Some((_, best))) => best,
            _ => self.net,
        };
        (net, self.log)
    }
}

fn run_phase(
    kind: PhaseKind,
    net: Network,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<(Network, PhaseLog)> {
    config.validate()?;
    let mut phase = Phase::start(kind, net, config);
    while !phase.is_done(config) {
        phase.run_epoch(train, val, config)?;
    }
    Ok(phase.finish())
}

/// Train extractor and main head on the diagnosis; bias heads are untouched.
/// Returns the epoch with the lowest validation loss.
pub fn pretrain(net: Network, train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<(Network, PhaseLog)> {
    require_both(train.iter().map(|s| s.diagnosis.label()), "pretraining set")?;
    run_phase(PhaseKind::Pretrain, net, train, val, config)
}

/// Joint main-task and reversed bias-head training. Returns the final epoch.
pub fn unlearn(net: Network, train: &[Sample], val: &[Sample], config: &TrainConfig) -> Result<(Network, PhaseLog)> {
    require_both(train.iter().map(|s| s.diagnosis.label()), "unlearning set")?;
    run_phase(PhaseKind::Unlearn, net, train, val, config)
}

/// Fresh network trained to detect one artifact; AUC is measured on `val`.
pub fn train_artifact_classifier(
    kind: ArtifactKind,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<(Network, AucResult)> {
    require_both(train.iter().map(|s| s.has(kind) as usize), &format!("{kind} flags in training set"))?;
    let net = init_network(train, config)?;
    let (net, _) = run_phase(PhaseKind::Classifier(kind), net, train, val, config)?;
    let scores = val.iter().map(|s| net.predict(&s.image)).collect::<Result<Vec<_>>>()?;
    let flags: Vec<bool> = val.iter().map(|s| s.has(kind)).collect();
    Ok((net, auc(&scores, &flags)?))
}

/// AUC of a logistic-regression probe for `kind`, fitted on frozen extractor
/// features of `train` and scored on `test`.
pub fn probe_auc(net: &Network, train: &[Sample], test: &[Sample], kind: ArtifactKind) -> Result<f64> {
    let feats = |set: &[Sample]| set.iter().map(|s| net.features(&s.image)).collect::<Result<Vec<_>>>();
    let xtr = feats(train)?;
    let xte = feats(test)?;
    let ytr: Vec<f64> = train.iter().map(|s| s.has(kind) as u8 as f64).collect();
    require_both(ytr.iter().map(|&y| y as usize), "probe training flags")?;
    let d = xtr[0].len();
    let n = xtr.len() as f64;
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for x in &xtr {
        for j in 0..d {
            mean[j] += x[j] / n;
        }
    }
    for x in &xtr {
        for j in 0..d {
            sd[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| if *v > 1e-18 { v.sqrt() } else { 1.0 }).collect();
    let z = |x: &[f64]| -> Vec<f64> { (0..d).map(|j| (x[j] - mean[j]) / sd[j]).collect() };
    let ztr: Vec<Vec<f64>> = xtr.iter().map(|x| z(x)).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let (lr, l2) = (0.5, 1e-3);
    for _ in 0..500 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in ztr.iter().zip(&ytr) {
            let s = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            let err = 1.0 / (1.0 + (-s).exp()) - y;
            for j in 0..d {
                gw[j] += err * x[j] / n;
            }
            gb += err / n;
        }
        for j in 0..d {
            w[j] -= lr * (gw[j] + l2 * w[j]);
        }
        b -= lr * gb;
    }
    let scores: Vec<f64> = xte
        .iter()
        .map(|x| b + w.iter().zip(z(x)).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    let flags: Vec<bool> = test.iter().map(|s| s.has(kind)).collect();
    Ok(auc(&scores, &flags)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_dataset, GenConfig};

    fn data(n: usize, seed: u64) -> Vec<Sample> {
        let mut c = GenConfig::new(n, seed);
        c.image_size = 16;
        c.artifact_prevalence = [0.5; 7];
        gen_dataset(&c).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            pretrain_epochs: 2,
            unlearn_epochs: 2,
            batch_size: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_identity() {
        let d = data(24, 1);
        let cfg = TrainConfig {
            pretrain_epochs: 0,
            ..quick()
        };
        let net = init_network(&d, &cfg).unwrap();
        let (out, log) = pretrain(net.clone(), &d[..16], &d[16..], &cfg).unwrap();
        assert_eq!(out, net);
        assert!(log.records.is_empty());
    }

    #[test]
    fn pretrain_leaves_bias_heads_alone() {
        let d = data(40, 2);
        let cfg = quick();
        let net = init_network(&d, &cfg).unwrap();
        let (out, log) = pretrain(net.clone(), &d[..32], &d[32..], &cfg).unwrap();
        assert_eq!(out.params.bias_heads, net.params.bias_heads);
        assert_ne!(out.params.extractor, net.params.extractor);
        assert_eq!(log.records.len(), 2);
        assert!(log.records.iter().all(|r| r.lr == cfg.lr0));
    }

    #[test]
    fn unlearn_moves_every_group() {
        let d = data(40, 3);
        let cfg = quick();
        let net = init_network(&d, &cfg).unwrap();
        let (out, log) = unlearn(net.clone(), &d[..32], &d[32..], &cfg).unwrap();
        assert_ne!(out.params.extractor, net.params.extractor);
        assert_ne!(out.params.main_head, net.params.main_head);
        assert_ne!(out.params.bias_heads, net.params.bias_heads);
        assert!(log.records[0].bias_auc.iter().all(|a| a.is_some()));
    }

    #[test]
    fn zero_lambda_matches_main_only_extractor() {
        let d = data(40, 4);
        let cfg = TrainConfig {
            lambda: 0.0,
            ..quick()
        };
        let net = init_network(&d, &cfg).unwrap();
        let (a, _) = unlearn(net.clone(), &d[..32], &d[32..], &cfg).unwrap();
        let masked = TrainConfig {
            bias_head_mask: [false; 7],
            ..cfg
        };
        let (b, _) = unlearn(net, &d[..32], &d[32..], &masked).unwrap();
        assert_eq!(a.params.extractor, b.params.extractor);
        assert_eq!(a.params.main_head, b.params.main_head);
    }

    #[test]
    fn deterministic_and_resumable() {
        let d = data(40, 5);
        let cfg = TrainConfig {
            pretrain_epochs: 3,
            ..quick()
        };
        let net = init_network(&d, &cfg).unwrap();
        let (full, full_log) = pretrain(net.clone(), &d[..32], &d[32..], &cfg).unwrap();
        assert_eq!(pretrain(net.clone(), &d[..32], &d[32..], &cfg).unwrap().0, full);

        let mut p = Phase::start(PhaseKind::Pretrain, net, &cfg);
        p.run_epoch(&d[..32], &d[32..], &cfg).unwrap();
        let bytes = p.checkpoint(&cfg).to_bytes().unwrap();
        let ckpt = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        let best = p.best.as_ref().map(|(_, n)| n.clone());
        let log = PhaseLog::from_jsonl(&p.log.to_jsonl().unwrap()).unwrap();
        let mut resumed = Phase::resume(PhaseKind::Pretrain, ckpt, best, log).unwrap();
        while !resumed.is_done(&cfg) {
            resumed.run_epoch(&d[..32], &d[32..], &cfg).unwrap();
        }
        let (net2, log2) = resumed.finish();
        assert_eq!(net2, full);
        assert_eq!(log2, full_log);
    }

    #[test]
    fn single_class_is_rejected() {
        let d: Vec<Sample> = data(40, 6).into_iter().filter(|s| s.diagnosis.is_malignant()).collect();
        let cfg = quick();
        let net = init_network(&d, &cfg).unwrap();
        assert!(matches!(pretrain(net, &d, &d, &cfg), Err(Error::SingleClass(_))));
    }

    #[test]
    fn stratified_validation() {
        let d = data(200, 7);
        let (train, val) = validation_split(&d, 0.1, ArtifactKind::DarkCorner, 1);
        assert_eq!(train.len() + val.len(), 200);
        assert!((18..=22).contains(&val.len()));
        let mal = val.iter().filter(|s| s.diagnosis.is_malignant()).count();
        assert!((8..=12).contains(&mal));
        let (t2, v2) = validation_split(&d, 0.1, ArtifactKind::DarkCorner, 1);
        assert_eq!((t2, v2), (train, val));
    }
}
