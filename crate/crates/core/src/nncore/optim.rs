use serde::{Deserialize, Serialize};

use super::network::{Group, Params, DEFAULT_CHANNELS};
use crate::error::{Error, Result};
use crate::synthgen::N_ARTIFACTS;
use crate::transforms::AugmentPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub pretrain_epochs: usize,
    pub unlearn_epochs: usize,
    pub lr_drop_epoch: usize,
    pub lr_drop_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Output channels of the four convolution blocks.
    pub channels: [usize; 4],
    /// Augment training batches (also used for test-time augmentation).
    pub augment: bool,
    pub policy: AugmentPolicy,
    /// Fraction of the training set held out for validation.
    pub val_fraction: f64,
    /// Bias heads active during unlearning.
    pub bias_head_mask: [bool; N_ARTIFACTS],
    /// Rescale each step's gradient to at most this global L2 norm.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            lambda: 0.3,
            pretrain_epochs: 100,
            unlearn_epochs: 100,
            lr_drop_epoch: 40,
            lr_drop_factor: 10.0,
            batch_size: 32,
            seed: 0,
            channels: DEFAULT_CHANNELS,
            augment: true,
            policy: AugmentPolicy::default(),
            val_fraction: 0.1,
            bias_head_mask: [true; N_ARTIFACTS],
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("train.lr0 must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("train.momentum must be in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.lambda < 0.0 {
            return bad("train.weight_decay and train.lambda must be non-negative");
        }
        if self.lr_drop_factor <= 0.0 {
            return bad("train.lr_drop_factor must be positive");
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return bad("train.grad_clip must be positive");
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be positive");
        }
        if self.channels.contains(&0) {
            return bad("train.channels must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("train.val_fraction must be in [0, 1)");
        }
        let (lo, hi) = self.policy.crop_area_range;
        if !(0.0 < lo && lo <= hi && hi <= 1.0) {
            return bad("train.policy.crop_area_range must satisfy 0 < lo <= hi <= 1");
        }
        Ok(())
    }
}

/// Learning rate for a zero-based epoch within the current phase.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    if epoch < config.lr_drop_epoch {
        config.lr0
    } else {
        config.lr0 / config.lr_drop_factor
    }
}

/// Scale `grads` down so their global L2 norm is at most `max`. Returns the
/// norm before scaling.
pub fn clip_grad_norm(grads: &mut Params, max: f64) -> f64 {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|(_, _, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max {
        let k = max / norm;
        for (_, _, t) in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= k);
        }
    }
    norm
}

/// One SGD update of a single tensor:
/// `g' = g + wd*p; v = m*v + g'; p -= lr*v`.
pub fn sgd_step(
    param: &mut [f64],
    grad: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != velocity.len() {
        return Err(Error::ShapeMismatch(format!(
            "param {}, grad {}, velocity {}",
            param.len(),
            grad.len(),
            velocity.len()
        )));
    }
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD over a whole parameter set with persistent velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Params,
}

impl Sgd {
    pub fn new(params: &Params, momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        }
    }

    /// Update the tensors whose group passes `update`; others (and their
    /// velocity) are left untouched.
    pub fn step(
        &mut self,
        params: &mut Params,
        grads: &Params,
        lr: f64,
        update: impl Fn(Group) -> bool,
    ) -> Result<()> {
        let grads = grads.tensors();
        let vel = self.velocity.tensors_mut();
        let ps = params.tensors_mut();
        if grads.len() != ps.len() || vel.len() != ps.len() {
            return Err(Error::ShapeMismatch("parameter sets differ in layout".into()));
        }
        for (((_, group, p), (_, _, g)), (_, _, v)) in ps.into_iter().zip(grads).zip(vel) {
            if update(group) {
                sgd_step(p, g, v, lr, self.momentum, self.weight_decay)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_caps_the_global_norm() {
        let net = crate::nncore::Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        let mut g = net.params.clone();
        let before = clip_grad_norm(&mut g, 1.0);
        assert!(before > 1.0);
        let after = clip_grad_norm(&mut g, 1.0);
        assert!((after - 1.0).abs() < 1e-12);
        let mut h = g.clone();
        assert_eq!(clip_grad_norm(&mut h, 10.0), after);
        assert_eq!(h, g);
    }

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.momentum, c.weight_decay, c.lambda, c.pretrain_epochs, c.unlearn_epochs),
            (0.9, 0.0005, 0.3, 100, 100)
        );
        assert_eq!((c.lr_drop_epoch, c.lr_drop_factor), (40, 10.0));
        c.validate().unwrap();
    }

    #[test]
    fn schedule() {
        let c = TrainConfig {
            lr0: 0.1,
            ..TrainConfig::default()
        };
        assert_eq!(lr_at(0, &c), 0.1);
        assert_eq!(lr_at(39, &c), 0.1);
        assert_eq!(lr_at(40, &c), 0.1 / 10.0);
        assert_eq!(lr_at(99, &c), 0.1 / 10.0);
    }

    #[test]
    fn sgd_cases() {
        let mut p = [1.0, -2.0];
        let mut v = [0.0; 2];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert_eq!(p, [1.0, -2.0]);
        sgd_step(&mut p, &[0.5, 1.0], &mut [0.0; 2], 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p, [1.0 - 0.1 * 0.5, -2.0 - 0.1]);

        // Two unit-gradient steps with momentum: v1 = 1, v2 = 1.9.
        let mut p = [0.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        sgd_step(&mut p, &[1.0], &mut v, 0.1, 0.9, 0.0).unwrap();
        assert!((p[0] + 0.29).abs() < 1e-15);

        assert!(sgd_step(&mut [0.0], &[1.0, 2.0], &mut [0.0], 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<TrainConfig>("lr0 = 0.1\nbogus = 1").is_err());
        let c: TrainConfig = toml::from_str("lr0 = 0.05").unwrap();
        assert_eq!(c.lr0, 0.05);
        assert_eq!(c.momentum, 0.9);
    }
}
