use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{gen_lesion, inject_artifact, ArtifactFlags, ArtifactKind, Diagnosis, RenderParams, Sample};
use crate::error::{Error, Result};
use crate::rng::{self, chance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    pub n_samples: usize,
    #[serde(default = "default_balance")]
    pub class_balance: f64,
    /// Per-kind injection probability, indexed like [`ArtifactKind::ALL`].
    pub artifact_prevalence: [f64; 7],
    pub base_seed: u64,
    #[serde(default = "default_signal")]
    pub signal_strength: f64,
}

fn default_image_size() -> usize {
    64
}
fn default_balance() -> f64 {
    0.5
}
fn default_signal() -> f64 {
    1.0
}

impl GenConfig {
    pub fn new(n_samples: usize, base_seed: u64) -> Self {
        Self {
            image_size: 64,
            n_samples,
            class_balance: 0.5,
            artifact_prevalence: [0.0; 7],
            base_seed,
            signal_strength: 1.0,
        }
    }

    pub fn with_prevalence(mut self, kind: ArtifactKind, p: f64) -> Self {
        self.artifact_prevalence[kind.index()] = p;
        self
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            image_size: self.image_size,
            signal_strength: self.signal_strength,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.render_params().validate()?;
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return Err(Error::InvalidConfig(format!(
                "class_balance must be in [0, 1], got {}",
                self.class_balance
            )));
        }
        for (kind, p) in ArtifactKind::ALL.iter().zip(self.artifact_prevalence) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!(
                    "prevalence of {kind} must be in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }

    /// Number of malignant samples the generator emits.
    pub fn n_malignant(&self) -> usize {
        (self.n_samples as f64 * self.class_balance).round() as usize
    }
}

/// Seed used to render artifact `kind` on the sample generated from `sample_seed`.
pub fn artifact_seed(sample_seed: u64, kind: ArtifactKind) -> u64 {
    rng::derive(sample_seed, 1000 + kind.index() as u64)
}

/// Rebuild a sample from its seed, diagnosis and flags. Artifacts are applied in
/// kind order, each with [`artifact_seed`].
pub fn regenerate(
    seed: u64,
    diagnosis: Diagnosis,
    artifacts: &ArtifactFlags,
    params: &RenderParams,
) -> Sample {
    let mut sample = gen_lesion(seed, diagnosis, params);
    for kind in ArtifactKind::ALL {
        if artifacts[kind.index()] {
            sample = inject_artifact(&sample, kind, artifact_seed(seed, kind))
                .expect("flags start clear and each kind is applied once");
        }
    }
    sample
}

/// Generate `n_samples` samples. Sample `i` has id `i` and seed
/// `base_seed ^ i`; diagnoses are an exact class split assigned in shuffled
/// order; each artifact is drawn independently of the diagnosis.
pub fn gen_dataset(config: &GenConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let n = config.n_samples;
    let mut diagnoses: Vec<Diagnosis> = (0..n)
        .map(|i| {
            if i < config.n_malignant() {
                Diagnosis::Malignant
            } else {
                Diagnosis::Benign
            }
        })
        .collect();
    let mut order_rng = rng::seeded(rng::derive(config.base_seed, rng::tag("labels")));
    diagnoses.shuffle(&mut order_rng);

    let params = config.render_params();
    let samples = diagnoses
        .into_iter()
        .enumerate()
        .map(|(i, diagnosis)| {
            let seed = config.base_seed ^ i as u64;
            let mut flag_rng = rng::seeded(rng::derive(seed, rng::tag("prevalence")));
            let mut flags = [false; 7];
            for kind in ArtifactKind::ALL {
                flags[kind.index()] = chance(&mut flag_rng, config.artifact_prevalence[kind.index()]);
            }
            let mut sample = regenerate(seed, diagnosis, &flags, &params);
            sample.id = i as u64;
            sample
        })
        .collect();
    Ok(samples)
}
