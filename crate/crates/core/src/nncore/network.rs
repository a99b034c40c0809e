use serde::{Deserialize, Serialize};

use super::layers::{
    avg_pool2, avg_pool2_backward, block_avg_pool, block_avg_pool_backward, global_max_pool, global_max_pool_backward, smooth_relu,
    smooth_relu_backward, Conv2d, Linear,
};
use super::loss::{cross_entropy, grad_reverse_backward};
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::rng;
use crate::synthgen::{Sample, N_ARTIFACTS};

/// First two convolution blocks, shared by every head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extractor {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

/// Two more convolution blocks, global max pooling and a dense layer to 2 logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainHead {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub dense: Linear,
}

/// Every trainable tensor of a network. Gradients and optimizer velocity use
/// the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub extractor: Extractor,
    pub main_head: MainHead,
    /// One affine map per artifact kind, reading pooled extractor features.
    pub bias_heads: Vec<Linear>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    Extractor,
    MainHead,
    BiasHead(usize),
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        let conv = |c: &Conv2d| Conv2d::zeros(c.cin, c.cout);
        let lin = |l: &Linear| Linear::zeros(l.inp, l.out);
        Self {
            extractor: Extractor {
                conv1: conv(&self.extractor.conv1),
                conv2: conv(&self.extractor.conv2),
            },
            main_head: MainHead {
                conv1: conv(&self.main_head.conv1),
                conv2: conv(&self.main_head.conv2),
                dense: lin(&self.main_head.dense),
            },
            bias_heads: self.bias_heads.iter().map(lin).collect(),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Group, &[f64])> {
        let mut out: Vec<(String, Group, &[f64])> = vec![
            ("extractor.conv1.weight".into(), Group::Extractor, &self.extractor.conv1.weight),
            ("extractor.conv1.bias".into(), Group::Extractor, &self.extractor.conv1.bias),
            ("extractor.conv2.weight".into(), Group::Extractor, &self.extractor.conv2.weight),
            ("extractor.conv2.bias".into(), Group::Extractor, &self.extractor.conv2.bias),
            ("main_head.conv1.weight".into(), Group::MainHead, &self.main_head.conv1.weight),
            ("main_head.conv1.bias".into(), Group::MainHead, &self.main_head.conv1.bias),
            ("main_head.conv2.weight".into(), Group::MainHead, &self.main_head.conv2.weight),
            ("main_head.conv2.bias".into(), Group::MainHead, &self.main_head.conv2.bias),
            ("main_head.dense.weight".into(), Group::MainHead, &self.main_head.dense.weight),
            ("main_head.dense.bias".into(), Group::MainHead, &self.main_head.dense.bias),
        ];
        for (k, h) in self.bias_heads.iter().enumerate() {
            out.push((format!("bias_heads.{k}.weight"), Group::BiasHead(k), &h.weight));
            out.push((format!("bias_heads.{k}.bias"), Group::BiasHead(k), &h.bias));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, Group, &mut Vec<f64>)> {
        let mut out: Vec<(String, Group, &mut Vec<f64>)> = vec![
            ("extractor.conv1.weight".into(), Group::Extractor, &mut self.extractor.conv1.weight),
            ("extractor.conv1.bias".into(), Group::Extractor, &mut self.extractor.conv1.bias),
            ("extractor.conv2.weight".into(), Group::Extractor, &mut self.extractor.conv2.weight),
            ("extractor.conv2.bias".into(), Group::Extractor, &mut self.extractor.conv2.bias),
            ("main_head.conv1.weight".into(), Group::MainHead, &mut self.main_head.conv1.weight),
            ("main_head.conv1.bias".into(), Group::MainHead, &mut self.main_head.conv1.bias),
            ("main_head.conv2.weight".into(), Group::MainHead, &mut self.main_head.conv2.weight),
            ("main_head.conv2.bias".into(), Group::MainHead, &mut self.main_head.conv2.bias),
            ("main_head.dense.weight".into(), Group::MainHead, &mut self.main_head.dense.weight),
            ("main_head.dense.bias".into(), Group::MainHead, &mut self.main_head.dense.bias),
        ];
        for (k, h) in self.bias_heads.iter_mut().enumerate() {
            out.push((format!("bias_heads.{k}.weight"), Group::BiasHead(k), &mut h.weight));
            out.push((format!("bias_heads.{k}.bias"), Group::BiasHead(k), &mut h.bias));
        }
        out
    }
}

/// Per-channel input standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl Default for InputNorm {
    fn default() -> Self {
        Self {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

impl InputNorm {
    /// Channel mean and population std over every pixel of `samples`.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut n = 0usize;
        for s in samples {
            for px in s.image.as_slice().chunks_exact(3) {
                for c in 0..3 {
                    sum[c] += px[c];
                    sq[c] += px[c] * px[c];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::default();
        }
        let nf = n as f64;
        let mean = sum.map(|v| v / nf);
        let mut std = [1.0; 3];
        for c in 0..3 {
            let var = (sq[c] / nf - mean[c] * mean[c]).max(0.0);
            std[c] = if var > 1e-12 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }
}

/// Side of the coarse grid the extractor map is averaged onto before the bias
/// heads, so they see where an artifact is and not only how much of it.
pub const BIAS_GRID: usize = 4;

/// Output channels of the four convolution blocks.
pub const DEFAULT_CHANNELS: [usize; 4] = [8, 16, 16, 16];

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub image_size: usize,
    pub channels: [usize; 4],
    pub norm: InputNorm,
    pub lambda: f64,
    pub params: Params,
}

/// Minibatch; `labels` is the main-task target (diagnosis unless retargeted).
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub artifact_flags: Vec<[bool; N_ARTIFACTS]>,
}

impl Batch {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut b = Batch {
            images: Vec::new(),
            labels: Vec::new(),
            artifact_flags: Vec::new(),
        };
        for s in samples {
            b.images.push(s.image.clone());
            b.labels.push(s.diagnosis.label());
            b.artifact_flags.push(s.artifacts);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.images.len() || self.artifact_flags.len() != self.images.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "batch has {} images, {} labels, {} flag rows",
                self.images.len(),
                self.labels.len(),
                self.artifact_flags.len()
            )));
        }
        if self.is_empty() {
            return Err(Error::Empty("batch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    /// Pooled extractor features, one row per sample.
    pub features: Vec<Vec<f64>>,
    pub main_logits: Vec<[f64; 2]>,
    pub bias_logits: Vec<[[f64; 2]; N_ARTIFACTS]>,
}

/// Which losses enter the objective and how the bias-head gradient reaches the
/// extractor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub main: bool,
    pub bias_heads: [bool; N_ARTIFACTS],
    /// Multiplier on the bias-to-extractor path: `-lambda` through the
    /// reversal layer, `1.0` for a plain path, `0.0` to detach.
    pub bias_to_extractor: f64,
}

impl LossSpec {
    pub fn main_only() -> Self {
        Self {
            main: true,
            bias_heads: [false; N_ARTIFACTS],
            bias_to_extractor: 0.0,
        }
    }

    /// Main loss plus reversed bias losses for the enabled heads.
    pub fn unlearn(lambda: f64, mask: [bool; N_ARTIFACTS]) -> Self {
        Self {
            main: true,
            bias_heads: mask,
            bias_to_extractor: -lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub main: f64,
    pub bias: [f64; N_ARTIFACTS],
}

impl Losses {
    pub fn total(&self, spec: &LossSpec) -> f64 {
        let mut t = if spec.main { self.main } else { 0.0 };
        for k in 0..N_ARTIFACTS {
            if spec.bias_heads[k] {
                t += self.bias[k];
            }
        }
        t
    }
}

/// Activations kept for the backward pass of one sample.
struct Trace {
    x0: Vec<f64>,
    z1: Vec<f64>,
    p1: Vec<f64>,
    z2: Vec<f64>,
    e: Vec<f64>,
    feat: Vec<f64>,
    z3: Vec<f64>,
    p3: Vec<f64>,
    z4: Vec<f64>,
    g: Vec<f64>,
    g_arg: Vec<usize>,
}

impl Network {
    /// Fresh network with seeded fan-in-scaled uniform weights.
    pub fn new(image_size: usize, channels: [usize; 4], lambda: f64, seed: u64) -> Result<Self> {
        if image_size < 16 || !image_size.is_multiple_of(16) {
            return Err(Error::InvalidConfig(format!(
                "network image size must be a positive multiple of 16, got {image_size}"
            )));
        }
        if channels.contains(&0) {
            return Err(Error::InvalidConfig("channel counts must be positive".into()));
        }
        let mut r = rng::seeded(rng::derive(seed, rng::tag("init")));
        let [c1, c2, c3, c4] = channels;
        let params = Params {
            extractor: Extractor {
                conv1: Conv2d::init(3, c1, &mut r),
                conv2: Conv2d::init(c1, c2, &mut r),
            },
            main_head: MainHead {
                conv1: Conv2d::init(c2, c3, &mut r),
                conv2: Conv2d::init(c3, c4, &mut r),
                dense: Linear::init(c4, 2, &mut r),
            },
            bias_heads: (0..N_ARTIFACTS).map(|_| Linear::init(c2 * BIAS_GRID * BIAS_GRID, 2, &mut r)).collect(),
        };
        Ok(Self {
            image_size,
            channels,
            norm: InputNorm::default(),
            lambda,
            params,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.channels[1] * BIAS_GRID * BIAS_GRID
    }

    fn input(&self, image: &Image) -> Result<Vec<f64>> {
        let (h, w) = image.dims();
        if h != self.image_size || w != self.image_size {
            return Err(Error::DimensionMismatch(format!(
                "image is {h}x{w}, network expects {0}x{0}",
                self.image_size
            )));
        }
        let mut x = image.to_planar();
        let hw = h * w;
        for c in 0..3 {
            let (m, s) = (self.norm.mean[c], self.norm.std[c]);
            for v in &mut x[c * hw..(c + 1) * hw] {
                *v = (*v - m) / s;
            }
        }
        Ok(x)
    }

    fn trace(&self, image: &Image) -> Result<Trace> {
        let x0 = self.input(image)?;
        let s = self.image_size;
        let [c1, c2, c3, _] = self.channels;
        let p = &self.params;
        let z1 = p.extractor.conv1.forward(&x0, s, s);
        let p1 = avg_pool2(&smooth_relu(&z1), c1, s, s);
        let z2 = p.extractor.conv2.forward(&p1, s / 2, s / 2);
        let e = avg_pool2(&smooth_relu(&z2), c2, s / 2, s / 2);
        let feat = block_avg_pool(&e, c2, s / 4, s / 4, s / 4 / BIAS_GRID);
        let z3 = p.main_head.conv1.forward(&e, s / 4, s / 4);
        let p3 = avg_pool2(&smooth_relu(&z3), c3, s / 4, s / 4);
        let z4 = p.main_head.conv2.forward(&p3, s / 8, s / 8);
        let c4 = self.channels[3];
        let p4 = avg_pool2(&smooth_relu(&z4), c4, s / 8, s / 8);
        let (g, g_arg) = global_max_pool(&p4, c4, (s / 16) * (s / 16));
        Ok(Trace {
            x0,
            z1,
            p1,
            z2,
            e,
            feat,
            z3,
            p3,
            z4,
            g,
            g_arg,
        })
    }

    fn heads(&self, t: &Trace) -> ([f64; 2], [[f64; 2]; N_ARTIFACTS]) {
        let m = self.params.main_head.dense.forward(&t.g);
        let mut b = [[0.0; 2]; N_ARTIFACTS];
        for (k, head) in self.params.bias_heads.iter().enumerate() {
            let l = head.forward(&t.feat);
            b[k] = [l[0], l[1]];
        }
        ([m[0], m[1]], b)
    }

    pub fn forward(&self, batch: &Batch) -> Result<Outputs> {
        batch.validate()?;
        let mut out = Outputs {
            features: Vec::with_capacity(batch.len()),
            main_logits: Vec::with_capacity(batch.len()),
            bias_logits: Vec::with_capacity(batch.len()),
        };
        for img in &batch.images {
            let t = self.trace(img)?;
            let (m, b) = self.heads(&t);
            out.features.push(t.feat);
            out.main_logits.push(m);
            out.bias_logits.push(b);
        }
        Ok(out)
    }

    /// Pooled extractor features of one image.
    pub fn features(&self, image: &Image) -> Result<Vec<f64>> {
        let x0 = self.input(image)?;
        let s = self.image_size;
        let [c1, c2, _, _] = self.channels;
        let z1 = self.params.extractor.conv1.forward(&x0, s, s);
        let p1 = avg_pool2(&smooth_relu(&z1), c1, s, s);
        let z2 = self.params.extractor.conv2.forward(&p1, s / 2, s / 2);
        let e = avg_pool2(&smooth_relu(&z2), c2, s / 2, s / 2);
        Ok(block_avg_pool(&e, c2, s / 4, s / 4, s / 4 / BIAS_GRID))
    }

    /// Softmax probability of class 1 from the main head.
    pub fn predict(&self, image: &Image) -> Result<f64> {
        let t = self.trace(image)?;
        Ok(softmax2(self.heads(&t).0)[1])
    }

    /// Losses, their gradients with respect to every parameter, and the
    /// forward outputs they were computed from.
    pub fn backprop(&self, batch: &Batch, spec: &LossSpec) -> Result<(Params, Losses, Outputs)> {
        batch.validate()?;
        let n = batch.len();
        let traces = batch
            .images
            .iter()
            .map(|img| self.trace(img))
            .collect::<Result<Vec<_>>>()?;
        let heads: Vec<_> = traces.iter().map(|t| self.heads(t)).collect();

        let mut losses = Losses::default();
        let (main_loss, dmain) =
            cross_entropy(&heads.iter().map(|h| h.0).collect::<Vec<_>>(), &batch.labels)?;
        losses.main = main_loss;
        let mut dbias = vec![[[0.0; 2]; N_ARTIFACTS]; n];
        for k in 0..N_ARTIFACTS {
            let logits: Vec<_> = heads.iter().map(|h| h.1[k]).collect();
            let labels: Vec<usize> = batch.artifact_flags.iter().map(|f| f[k] as usize).collect();
            let (l, d) = cross_entropy(&logits, &labels)?;
            losses.bias[k] = l;
            if spec.bias_heads[k] {
                for i in 0..n {
                    dbias[i][k] = d[i];
                }
            }
        }

        let mut grad = self.params.zeros_like();
        let any_bias = spec.bias_heads.iter().any(|&b| b);
        for (i, t) in traces.iter().enumerate() {
            let dm = if spec.main { Some(dmain[i]) } else { None };
            self.backward_one(t, dm, any_bias.then_some(&dbias[i]), spec.bias_to_extractor, &mut grad);
        }
        let outputs = Outputs {
            features: traces.into_iter().map(|t| t.feat).collect(),
            main_logits: heads.iter().map(|h| h.0).collect(),
            bias_logits: heads.iter().map(|h| h.1).collect(),
        };
        Ok((grad, losses, outputs))
    }

    fn backward_one(
        &self,
        t: &Trace,
        dmain: Option<[f64; 2]>,
        dbias: Option<&[[f64; 2]; N_ARTIFACTS]>,
        bias_scale: f64,
        grad: &mut Params,
    ) {
        let s = self.image_size;
        let [c1, c2, c3, c4] = self.channels;
        let p = &self.params;
        let e_hw = (s / 4) * (s / 4);
        let mut de = vec![0.0; c2 * e_hw];
        let mut extractor_live = false;

        if let Some(dm) = dmain {
            let dg = p.main_head.dense.backward(&t.g, &dm, &mut grad.main_head.dense);
            let dp4 = global_max_pool_backward(&dg, &t.g_arg, c4 * (s / 16) * (s / 16));
            let mut dz4 = avg_pool2_backward(&dp4, c4, s / 8, s / 8);
            smooth_relu_backward(&t.z4, &mut dz4);
            let mut dp3 = vec![0.0; t.p3.len()];
            p.main_head.conv2.backward(
                &t.p3,
                s / 8,
                s / 8,
                &dz4,
                &mut grad.main_head.conv2,
                Some(&mut dp3),
            );
            let mut dz3 = avg_pool2_backward(&dp3, c3, s / 4, s / 4);
            smooth_relu_backward(&t.z3, &mut dz3);
            p.main_head.conv1.backward(
                &t.e,
                s / 4,
                s / 4,
                &dz3,
                &mut grad.main_head.conv1,
                Some(&mut de),
            );
            extractor_live = true;
        }

        if let Some(db) = dbias {
            let mut dfeat = vec![0.0; t.feat.len()];
            for (k, head) in p.bias_heads.iter().enumerate() {
                let d = head.backward(&t.feat, &db[k], &mut grad.bias_heads[k]);
                for (a, b) in dfeat.iter_mut().zip(&d) {
                    *a += b;
                }
            }
            if bias_scale != 0.0 {
                // -lambda through the reversal layer, or a plain multiplier.
                let routed = if bias_scale < 0.0 {
                    grad_reverse_backward(&dfeat, -bias_scale)
                } else {
                    dfeat.iter().map(|v| v * bias_scale).collect()
                };
                for (a, b) in de.iter_mut().zip(block_avg_pool_backward(&routed, c2, s / 4, s / 4, s / 4 / BIAS_GRID)) {
                    *a += b;
                }
                extractor_live = true;
            }
        }

        if !extractor_live {
            return;
        }
        let mut dz2 = avg_pool2_backward(&de, c2, s / 2, s / 2);
        smooth_relu_backward(&t.z2, &mut dz2);
        let mut dp1 = vec![0.0; t.p1.len()];
        p.extractor.conv2.backward(
            &t.p1,
            s / 2,
            s / 2,
            &dz2,
            &mut grad.extractor.conv2,
            Some(&mut dp1),
        );
        let mut dz1 = avg_pool2_backward(&dp1, c1, s, s);
        smooth_relu_backward(&t.z1, &mut dz1);
        p.extractor.conv1.backward(&t.x0, s, s, &dz1, &mut grad.extractor.conv1, None);
    }
}

/// Numerically stable two-class softmax.
pub fn softmax2(l: [f64; 2]) -> [f64; 2] {
    let m = l[0].max(l[1]);
    let e0 = (l[0] - m).exp();
    let e1 = (l[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{gen_lesion, Diagnosis, RenderParams};

    fn batch(n: usize) -> Batch {
        let params = RenderParams {
            image_size: 16,
            signal_strength: 1.0,
        };
        let samples: Vec<Sample> = (0..n as u64)
            .map(|i| {
                let d = if i % 2 == 0 { Diagnosis::Benign } else { Diagnosis::Malignant };
                let mut s = gen_lesion(i, d, &params);
                s.artifacts[(i as usize) % N_ARTIFACTS] = true;
                s
            })
            .collect();
        Batch::from_samples(&samples)
    }

    #[test]
    fn output_shapes() {
        let net = Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        let out = net.forward(&batch(1)).unwrap();
        assert_eq!(out.features.len(), 1);
        assert_eq!(out.features[0].len(), net.feature_dim());
        assert_eq!(out.main_logits.len(), 1);
        assert_eq!(out.bias_logits[0].len(), N_ARTIFACTS);
    }

    #[test]
    fn duplicated_rows_give_duplicated_outputs() {
        let net = Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        let mut b = batch(1);
        b.images.push(b.images[0].clone());
        b.labels.push(b.labels[0]);
        b.artifact_flags.push(b.artifact_flags[0]);
        let out = net.forward(&b).unwrap();
        assert_eq!(out.main_logits[0], out.main_logits[1]);
        assert_eq!(out.features[0], out.features[1]);
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut net = Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        net.params = net.params.zeros_like();
        let out = net.forward(&batch(3)).unwrap();
        assert!(out.main_logits.iter().all(|l| *l == [0.0, 0.0]));
        assert!(out.bias_logits.iter().flatten().all(|l| *l == [0.0, 0.0]));
    }

    #[test]
    fn wrong_size_is_rejected() {
        let net = Network::new(32, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        assert!(matches!(net.forward(&batch(1)), Err(Error::DimensionMismatch(_))));
        assert!(Network::new(24, DEFAULT_CHANNELS, 0.3, 1).is_err());
    }

    #[test]
    fn main_only_leaves_bias_heads_without_gradient() {
        let net = Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        let (g, _, _) = net.backprop(&batch(4), &LossSpec::main_only()).unwrap();
        for (_, group, t) in g.tensors() {
            if matches!(group, Group::BiasHead(_)) {
                assert!(t.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn detached_bias_loss_does_not_reach_extractor() {
        let net = Network::new(16, DEFAULT_CHANNELS, 0.3, 1).unwrap();
        let spec = LossSpec {
            main: false,
            bias_heads: [true; N_ARTIFACTS],
            bias_to_extractor: 0.0,
        };
        let (g, _, _) = net.backprop(&batch(4), &spec).unwrap();
        assert!(g.extractor.conv1.weight.iter().all(|&v| v == 0.0));
        assert!(g.bias_heads[0].weight.iter().any(|&v| v != 0.0));
    }
}
