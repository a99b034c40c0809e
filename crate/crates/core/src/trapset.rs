//! Trap splits: train and test sets drawn from one pool so that a chosen
//! artifact correlates with malignancy at `+c` in train and `-c` in test.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{phi_from_table, Contingency};
use crate::synthgen::io::TOOL_VERSION;
use crate::synthgen::{ArtifactKind, Sample};

pub const SPLIT_FILE: &str = "split.json";

fn default_artifact() -> ArtifactKind {
    ArtifactKind::DarkCorner
}
fn default_balance() -> f64 {
    0.5
}
fn default_tolerance() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSpec {
    #[serde(default = "default_artifact")]
    pub artifact: ArtifactKind,
    pub target_corr: f64,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_balance")]
    pub class_balance: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TrapSpec {
    pub fn new(target_corr: f64, n_train: usize, n_test: usize, seed: u64) -> Self {
        Self {
            artifact: default_artifact(),
            target_corr,
            n_train,
            n_test,
            class_balance: default_balance(),
            tolerance: default_tolerance(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(0.0..=1.0).contains(&self.target_corr) {
            return bad(format!("trap.target_corr {} not in [0, 1]", self.target_corr));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return bad(format!("trap.class_balance {} not in [0, 1]", self.class_balance));
        }
        if !(self.tolerance > 0.0) {
            return bad("trap.tolerance must be positive".into());
        }
        if self.n_train < 4 || self.n_test < 4 {
            return bad("trap.n_train and trap.n_test must be at least 4".into());
        }
        Ok(())
    }
}

/// Integer 2×2 table (artifact × malignant) with `n` cells, `round(n·balance)`
/// malignant, half carrying the artifact, and phi as close to `phi` as
/// integers allow. Rounding ties go toward the smaller artifact∧malignant cell.
pub fn target_table(n: usize, balance: f64, phi: f64) -> Contingency {
    let r1 = (n as f64 * balance).round() as usize;
    let c1 = n / 2;
    let (r1f, c1f, nf) = (r1 as f64, c1 as f64, n as f64);
    let spread = (r1f * (nf - r1f) * c1f * (nf - c1f)).sqrt();
    // ad - bc = n·a - r1·c1
    let exact = (phi * spread + r1f * c1f) / nf;
    let lo = (r1 + c1).saturating_sub(n);
    let hi = r1.min(c1);
    let a = if exact - exact.floor() == 0.5 {
        exact.floor()
    } else {
        exact.round()
    };
    let a = (a.max(0.0) as usize).clamp(lo, hi);
    Contingency {
        a,
        b: c1 - a,
        c: r1 - a,
        d: n - r1 - c1 + a,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSplit {
    pub spec: TrapSpec,
    pub train: Vec<u64>,
    pub test: Vec<u64>,
    pub achieved_train_corr: f64,
    pub achieved_test_corr: f64,
}

const CELL_NAMES: [&str; 4] = [
    "artifact+malignant",
    "artifact+benign",
    "clean+malignant",
    "clean+benign",
];

fn cell_of(s: &Sample, kind: ArtifactKind) -> usize {
    match (s.has(kind), s.diagnosis.is_malignant()) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

fn cells(t: &Contingency) -> [usize; 4] {
    [t.a, t.b, t.c, t.d]
}

pub fn sample_trap(pool: &[Sample], spec: &TrapSpec) -> Result<TrapSplit> {
    spec.validate()?;
    let requested = spec.n_train + spec.n_test;
    if requested > pool.len() {
        return Err(Error::OverlappingRequest {
            requested,
            pool: pool.len(),
        });
    }
    let train_t = target_table(spec.n_train, spec.class_balance, spec.target_corr);
    let test_t = target_table(spec.n_test, spec.class_balance, -spec.target_corr);
    for (name, t, sign) in [("train", &train_t, 1.0), ("test", &test_t, -1.0)] {
        let got = phi_from_table(t).unwrap_or(0.0);
        if (got - sign * spec.target_corr).abs() > spec.tolerance {
            return Err(Error::InvalidConfig(format!(
                "{name} split of this size cannot reach phi {} within {} (best {got:.4})",
                sign * spec.target_corr,
                spec.tolerance
            )));
        }
    }

    let mut by_cell: [Vec<u64>; 4] = Default::default();
    for s in pool {
        by_cell[cell_of(s, spec.artifact)].push(s.id);
    }
    let (need_train, need_test) = (cells(&train_t), cells(&test_t));
    for k in 0..4 {
        let needed = need_train[k] + need_test[k];
        if needed > by_cell[k].len() {
            return Err(Error::InfeasibleTarget {
                cell: format!("{} ({})", CELL_NAMES[k], spec.artifact),
                needed,
                available: by_cell[k].len(),
            });
        }
    }

    let mut r = rng::seeded(rng::derive(spec.seed, rng::tag("trap")));
    let mut train = Vec::with_capacity(spec.n_train);
    let mut test = Vec::with_capacity(spec.n_test);
    for k in 0..4 {
        let ids = &mut by_cell[k];
        ids.sort_unstable();
        ids.shuffle(&mut r);
        train.extend_from_slice(&ids[..need_train[k]]);
        test.extend_from_slice(&ids[need_train[k]..need_train[k] + need_test[k]]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(TrapSplit {
        spec: spec.clone(),
        train,
        test,
        achieved_train_corr: phi_from_table(&train_t)?,
        achieved_test_corr: phi_from_table(&test_t)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub passed: bool,
    pub disjoint: bool,
    pub train_corr: f64,
    pub test_corr: f64,
    pub train_malignant: usize,
    pub test_malignant: usize,
    pub failures: Vec<String>,
}

fn measured_phi(ids: &[u64], index: &HashMap<u64, &Sample>, kind: ArtifactKind) -> Result<(f64, usize)> {
    let mut t = Contingency::default();
    for id in ids {
        let s = index.get(id).ok_or(Error::UnknownId(*id))?;
        match cell_of(s, kind) {
            0 => t.a += 1,
            1 => t.b += 1,
            2 => t.c += 1,
            _ => t.d += 1,
        }
    }
    Ok((phi_from_table(&t).unwrap_or(0.0), t.a + t.c))
}

/// Recompute both correlations from the pool and check the split contract.
pub fn verify_trap(split: &TrapSplit, pool: &[Sample]) -> Result<TrapReport> {
    let index: HashMap<u64, &Sample> = pool.iter().map(|s| (s.id, s)).collect();
    let kind = split.spec.artifact;
    let (train_corr, train_mal) = measured_phi(&split.train, &index, kind)?;
    let (test_corr, test_mal) = measured_phi(&split.test, &index, kind)?;
    let train_set: HashSet<u64> = split.train.iter().copied().collect();
    let disjoint = split.test.iter().all(|id| !train_set.contains(id))
        && train_set.len() == split.train.len()
        && split.test.iter().collect::<HashSet<_>>().len() == split.test.len();

    let mut failures = Vec::new();
    if !disjoint {
        failures.push("disjointness".to_string());
    }
    let (c, tol) = (split.spec.target_corr, split.spec.tolerance);
    if (train_corr - c).abs() > tol {
        failures.push(format!("train phi {train_corr:.4} not within {tol} of {c}"));
    }
    if (test_corr + c).abs() > tol {
        failures.push(format!("test phi {test_corr:.4} not within {tol} of {}", -c));
    }
    for (name, n, mal) in [
        ("train", split.train.len(), train_mal),
        ("test", split.test.len(), test_mal),
    ] {
        let want = n as f64 * split.spec.class_balance;
        if (mal as f64 - want).abs() > 1.0 {
            failures.push(format!("{name} has {mal} malignant, expected {want}"));
        }
    }
    Ok(TrapReport {
        passed: failures.is_empty(),
        disjoint,
        train_corr,
        test_corr,
        train_malignant: train_mal,
        test_malignant: test_mal,
        failures,
    })
}

/// On-disk split: the split itself plus provenance for the pool it indexes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub version: String,
    /// SHA-256 of the pool manifest the ids refer to.
    pub pool_checksum: String,
    pub config: serde_json::Value,
    pub split: TrapSplit,
}

impl SplitFile {
    pub fn new(split: TrapSplit, pool_checksum: String, config: serde_json::Value) -> Self {
        Self {
            version: TOOL_VERSION.to_string(),
            pool_checksum,
            config,
            split,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(dir.join(SPLIT_FILE), text)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SPLIT_FILE);
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{Diagnosis, Sample};
    use crate::raster::{Image, Mask};

    /// Flag-only pool; rasters are irrelevant to split construction.
    fn pool(n: usize, prevalence_every: usize) -> Vec<Sample> {
        (0..n as u64)
            .map(|i| {
                let mut artifacts = [false; 7];
                artifacts[0] = (i as usize / 2).is_multiple_of(prevalence_every);
                Sample {
                    id: i,
                    seed: i,
                    diagnosis: if i % 2 == 0 { Diagnosis::Benign } else { Diagnosis::Malignant },
                    artifacts,
                    image: Image::new(1, 1),
                    mask: Mask::new(1, 1),
                }
            })
            .collect()
    }

    #[test]
    fn table_for_strong_trap() {
        let t = target_table(400, 0.5, 0.8);
        assert_eq!((t.a, t.b, t.c, t.d), (180, 20, 20, 180));
        let t = target_table(400, 0.5, -0.8);
        assert_eq!((t.a, t.b, t.c, t.d), (20, 180, 180, 20));
        let t = target_table(10, 0.5, 0.0);
        assert_eq!(t.total(), 10);
        assert_eq!(t.a + t.c, 5);
    }

    #[test]
    fn feasible_split_verifies() {
        let p = pool(2000, 2);
        for c in [0.0, 0.2, 0.5, 0.8] {
            let split = sample_trap(&p, &TrapSpec::new(c, 400, 400, 3)).unwrap();
            let rep = verify_trap(&split, &p).unwrap();
            assert!(rep.passed, "{c}: {:?}", rep.failures);
            assert_eq!(split.train.len(), 400);
            assert_eq!(split.test.len(), 400);
        }
    }

    #[test]
    fn deterministic() {
        let p = pool(1000, 2);
        let s = TrapSpec::new(0.5, 200, 200, 9);
        assert_eq!(sample_trap(&p, &s).unwrap(), sample_trap(&p, &s).unwrap());
        let other = sample_trap(&p, &TrapSpec::new(0.5, 200, 200, 10)).unwrap();
        assert_ne!(sample_trap(&p, &s).unwrap().train, other.train);
    }

    #[test]
    fn empty_cell_is_infeasible() {
        let mut p = pool(2000, 2);
        for s in &mut p {
            if s.diagnosis.is_malignant() {
                s.artifacts[0] = false;
            }
        }
        let err = sample_trap(&p, &TrapSpec::new(0.8, 400, 400, 1)).unwrap_err();
        match err {
            Error::InfeasibleTarget { cell, available, .. } => {
                assert!(cell.contains("artifact+malignant"));
                assert_eq!(available, 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn oversized_request() {
        let p = pool(100, 2);
        assert!(matches!(
            sample_trap(&p, &TrapSpec::new(0.5, 60, 60, 1)),
            Err(Error::OverlappingRequest { requested: 120, pool: 100 })
        ));
    }

    #[test]
    fn verify_detects_overlap_and_unknown_ids() {
        let p = pool(2000, 2);
        let mut split = sample_trap(&p, &TrapSpec::new(0.8, 400, 400, 3)).unwrap();
        split.test[0] = split.train[0];
        let rep = verify_trap(&split, &p).unwrap();
        assert!(!rep.passed && !rep.disjoint);
        split.test[0] = 99_999;
        assert!(matches!(verify_trap(&split, &p), Err(Error::UnknownId(99_999))));
    }

    #[test]
    fn shuffled_test_labels_erase_correlation() {
        let mut p = pool(2000, 2);
        let split = sample_trap(&p, &TrapSpec::new(0.8, 400, 400, 3)).unwrap();
        // Reassign diagnoses of test members independently of the artifact.
        let test: HashSet<u64> = split.test.iter().copied().collect();
        let mut r = rng::seeded(77);
        let mut labels: Vec<bool> = (0..400).map(|i| i % 2 == 0).collect();
        labels.shuffle(&mut r);
        let mut it = labels.into_iter();
        for s in p.iter_mut().filter(|s| test.contains(&s.id)) {
            s.diagnosis = if it.next().unwrap() { Diagnosis::Malignant } else { Diagnosis::Benign };
        }
        let rep = verify_trap(&split, &p).unwrap();
        assert!(rep.test_corr.abs() < 0.15, "{}", rep.test_corr);
        assert!(!rep.passed);
    }

    #[test]
    fn split_file_round_trip() {
        let p = pool(200, 2);
        let split = sample_trap(&p, &TrapSpec::new(0.5, 40, 40, 3)).unwrap();
        let f = SplitFile::new(split, "abc".into(), serde_json::json!({"seed": 1}));
        let dir = tempfile::tempdir().unwrap();
        f.write(dir.path()).unwrap();
        assert_eq!(SplitFile::read(dir.path()).unwrap(), f);
        let text = fs::read_to_string(dir.path().join(SPLIT_FILE)).unwrap();
        assert!(text.contains("\"target_corr\": 0.5"));
    }
}
